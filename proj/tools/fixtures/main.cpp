// segrun-fixtures: synthetic cohorts, fixture models and a stub-hook config
// for trying segrun without external tools or real data.

#include "segrun/fixtures/models.hpp"
#include "segrun/fixtures/subjects.hpp"
#include "segrun/onnx/model.hpp"

#include <CLI11.hpp>
#include <json.hpp>

#include <fstream>
#include <iostream>

namespace fs = std::filesystem;
using namespace segrun;

namespace {

const char* kStubConfig = R"(# Stub hooks: brain extraction and registration copy their input.
[hooks.brain_extraction]
command = "cp {in0} {out0}"
version = "stub-1"

[hooks.registration]
command = "cp {in0} {out0}"
version = "stub-1"

[inference]
prefer_gpu = false
)";

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"segrun-fixtures: generate synthetic test data"};
  app.require_subcommand(1);

  std::string out;
  int count = 3;
  std::uint64_t seed = 1;
  std::vector<std::size_t> shape{40, 40, 32};
  std::vector<double> spacing{1.0, 1.0, 1.0};
  bool t1w_only = false;
  auto* c_cohort = app.add_subcommand("cohort", "Write a BIDS dataset of synthetic subjects with lesion masks");
  c_cohort->add_option("--out", out, "Dataset root")->required();
  c_cohort->add_option("--count", count, "Number of subjects")->check(CLI::Range(1, 99));
  c_cohort->add_option("--seed", seed, "Random seed");
  c_cohort->add_option("--shape", shape, "Volume shape x y z")->expected(3);
  c_cohort->add_option("--spacing", spacing, "Voxel spacing in mm")->expected(3);
  c_cohort->add_flag("--t1w-only", t1w_only, "Skip the FLAIR images");

  std::string kind = "unet", model_out;
  int channels = 2, width = 8, bottleneck = 16, patch = 16;
  double foreground = 0.1;
  bool calibrate = true;
  auto* c_model = app.add_subcommand("model", "Write a fixture ONNX model");
  c_model->add_option("--kind", kind, "Model kind")->check(CLI::IsMember({"unet", "identity", "constant", "wide"}));
  c_model->add_option("--out", model_out, "Output .onnx path")->required();
  c_model->add_option("--channels", channels, "Input channels (1 = T1w, 2 = T1w+FLAIR)")->check(CLI::Range(1, 2));
  c_model->add_option("--width", width, "First-level feature width");
  c_model->add_option("--bottleneck", bottleneck, "Bottleneck width (unet)");
  c_model->add_option("--seed", seed, "Weight seed");
  c_model->add_option("--patch", patch, "Calibration patch edge (unet)");
  c_model->add_option("--foreground", foreground, "Target lesion fraction when calibrating");
  c_model->add_flag("!--no-calibrate", calibrate, "Leave the head bias untouched");

  std::string config_out;
  auto* c_config = app.add_subcommand("config", "Write a config file with copy-through stub hooks");
  c_config->add_option("--out", config_out, "Output .toml path")->required();

  CLI11_PARSE(app, argc, argv);
  try {
    if (*c_cohort) {
      fixtures::SubjectSpec spec;
      spec.shape = {shape[0], shape[1], shape[2]};
      spec.spacing = {spacing[0], spacing[1], spacing[2]};
      const auto subjects = fixtures::write_cohort(out, count, seed, spec, !t1w_only);
      nlohmann::json listing = nlohmann::json::array();
      for (const auto& s : subjects) listing.push_back({{"subject_id", s.subject_id}, {"t1w", s.t1w_path.string()}});
      std::cout << listing.dump(2) << std::endl;
    } else if (*c_model) {
      onnx::ModelProto model;
      if (kind == "identity") {
        model = fixtures::identity_model(channels);
      } else if (kind == "constant") {
        model = fixtures::constant_model(channels, {0.0f, 1.0f});
      } else if (kind == "wide") {
        model = fixtures::wide_model(channels, 2, width, seed);
      } else {
        model = fixtures::unet_model({channels, 2, width, bottleneck, seed});
        if (calibrate) {
          fixtures::SubjectSpec spec;
          const auto samples = fixtures::calibration_patches(spec, 4, patch, channels == 2, seed + 76);
          fixtures::calibrate_head(model, samples, foreground, 1);
        }
      }
      if (fs::path(model_out).has_parent_path()) fs::create_directories(fs::path(model_out).parent_path());
      onnx_io::save(model, model_out);
      std::cout << nlohmann::json{{"path", model_out}, {"parameters", fixtures::parameter_count(model)}}.dump(2)
                << std::endl;
    } else if (*c_config) {
      if (fs::path(config_out).has_parent_path()) fs::create_directories(fs::path(config_out).parent_path());
      std::ofstream(config_out) << kStubConfig;
      std::cout << config_out << std::endl;
    }
  } catch (const std::exception& e) {
    std::cerr << "segrun-fixtures: " << e.what() << std::endl;
    return 2;
  }
  return 0;
}
