#pragma once

#include <optional>
#include <string>
#include <vector>

#include "lungdeform/case_io.hpp"
#include "lungdeform/config.hpp"
#include "lungdeform/report.hpp"

namespace lungdeform {

struct FoldResult {
    std::string held_out;
    std::vector<std::string> training_ids;
    double volume_ratio_true = 0.0;
    double volume_ratio_predicted = 0.0;
    double volume_ratio_error = 0.0; // |predicted - true|, as a fraction
    std::vector<double> clip_tre_mm;
    std::vector<double> clip_displacement_mm; // true clip motion magnitude
    double md_mm = 0.0;
    double hd_mm = 0.0;
    std::optional<double> interior_error_mm; // mean over interior points
};

struct CrossValReport {
    std::vector<FoldResult> folds; // ordered by case id
    Summary volume_ratio_error;
    Summary clip_tre_mm;          // over all clips of all folds
    Summary clip_displacement_mm; // idem
    Summary md_mm;
    Summary hd_mm;
    Summary interior_error_mm; // folds with interior points only
    std::vector<std::string> notes;

    // Aggregates recomputed from the fold rows.
    void aggregate();
    bool consistent() const;
};

// Displacement field each case contributes to training: the truth field
// when configured and present, otherwise the registration correspondence.
DisplacementField training_displacement(const CaseData& c, const Config& config);

// Leave-one-out over `cases`. Folds run on config.crossval.threads threads;
// the report does not depend on the thread count. A failing fold aborts the
// run with its case id.
CrossValReport run_crossval(const std::vector<CaseData>& cases, const Config& config);

std::string to_json(const CrossValReport& report);
std::string to_text(const CrossValReport& report);

} // namespace lungdeform
