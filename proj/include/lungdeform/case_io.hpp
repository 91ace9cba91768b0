#pragma once

#include <filesystem>
#include <optional>
#include <string>
#include <vector>

#include "lungdeform/kernel_deform.hpp"
#include "lungdeform/mesh.hpp"
#include "lungdeform/registration.hpp"
#include "lungdeform/synthetic.hpp"

namespace lungdeform {

// A paired inflated/deflated case as read from disk. Synthetic cases carry
// their truth field and interior points; clinical-style cases may not.
struct CaseData {
    std::string id;
    SurfaceMesh inflated;
    SurfaceMesh deflated;
    std::vector<LandmarkPair> clips; // anchored on `inflated`
    std::optional<DisplacementField> truth_field;
    std::optional<InteriorPointSet> interior;
    std::vector<Point3> interior_deflated; // empty when unknown
    std::optional<DeflationParams> params;
};

CaseData to_case_data(const SyntheticCase& c);

// Case directory layout:
//   case.json         id and file names
//   inflated.off      deflated.off
//   clips.json        [{"inflated": [x,y,z], "deflated": [x,y,z]}, ...]
//   params.json       deflation parameters (synthetic only)
//   truth_field.csv   vertex,dx,dy,dz (synthetic only)
//   interior.csv      x,y,z,x_deflated,y_deflated,z_deflated (optional)
void save_case(const SyntheticCase& c, const std::filesystem::path& dir);
CaseData load_case(const std::filesystem::path& dir);

// dataset.json lists case directories relative to `dir`.
void save_dataset(const std::vector<SyntheticCase>& cases, const std::filesystem::path& dir);
// Reads and validates every case before returning; the first bad file
// aborts the load with its path.
std::vector<CaseData> load_dataset(const std::filesystem::path& dir);

// Clip pairs from a clips.json file, anchored on `inflated`.
std::vector<LandmarkPair> load_clips(const std::filesystem::path& path, const SurfaceMesh& inflated);
void save_clips(const std::vector<LandmarkPair>& clips, const std::filesystem::path& path);

DisplacementField load_displacement_csv(const std::filesystem::path& path);
void save_displacement_csv(const DisplacementField& field, const std::filesystem::path& path);

void save_energy_trace_csv(const std::vector<EnergyRecord>& trace, const std::filesystem::path& path);

// JSON artifact tagged "lungdeform.kernel_model/v1".
void save_kernel_model(const KernelModel& model, const std::filesystem::path& path);
KernelModel load_kernel_model(const std::filesystem::path& path);

std::string read_text_file(const std::filesystem::path& path);
void write_text_file(const std::filesystem::path& path, const std::string& text);

} // namespace lungdeform
