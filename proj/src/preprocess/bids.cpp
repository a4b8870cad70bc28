#include "segrun/preprocess/bids.hpp"

#include "segrun/error.hpp"
#include "segrun/fsutil.hpp"
#include "segrun/preprocess/external_step.hpp"

#include <json.hpp>

#include <algorithm>

namespace segrun {

namespace fs = std::filesystem;

void SubjectRecord::validate() const {
  if (!bids::valid_label(subject_id)) {
    throw Error(Errc::InvalidArgument, "subject id '" + subject_id + "' must be alphanumeric");
  }
  if (t1w_path.empty()) throw Error(Errc::InvalidArgument, "subject " + subject_id + " has no T1w image");
  if (!fs::exists(t1w_path)) throw Error(Errc::IoError, "T1w image not found: " + t1w_path.string());
  if (flair_path && !fs::exists(*flair_path)) throw Error(Errc::IoError, "FLAIR image not found: " + flair_path->string());
}

namespace bids {

std::string space_label(Space space) { return space == Space::Orig ? "orig" : "MNI152"; }

bool valid_label(const std::string& label) {
  static const std::regex re("[A-Za-z0-9]+");
  return std::regex_match(label, re);
}

fs::path anat_dir(const fs::path& root, const std::string& subject_id) {
  return root / "segrun" / ("sub-" + subject_id) / "anat";
}

std::string file_name(const std::string& subject_id, Space space, const std::string& desc, const std::string& suffix,
                      const std::string& ext) {
  if (!valid_label(subject_id) || !valid_label(desc) || !valid_label(suffix)) {
    throw Error(Errc::InvalidArgument, "BIDS entities must be alphanumeric");
  }
  return "sub-" + subject_id + "_space-" + space_label(space) + "_desc-" + desc + "_" + suffix + ext;
}

fs::path derivative_path(const SubjectRecord& s, Space space, const std::string& desc, const std::string& suffix,
                         const std::string& ext) {
  return anat_dir(s.derivatives_root, s.subject_id) / file_name(s.subject_id, space, desc, suffix, ext);
}

fs::path run_provenance_path(const SubjectRecord& s) {
  return anat_dir(s.derivatives_root, s.subject_id) / ("sub-" + s.subject_id + "_desc-run_provenance.json");
}

fs::path sidecar_path(const fs::path& image) {
  std::string name = image.filename().string();
  const std::string ext = image_extension(image);
  return image.parent_path() / (name.substr(0, name.size() - ext.size()) + ".json");
}

const std::regex& filename_grammar() {
  static const std::regex re(
      R"(^sub-[A-Za-z0-9]+(_space-(orig|MNI152))?_desc-[A-Za-z0-9]+_[A-Za-z0-9]+\.(nii\.gz|json)$)");
  return re;
}

void ensure_dataset_description(const fs::path& root, const std::string& version) {
  const fs::path p = root / "segrun" / "dataset_description.json";
  if (fs::exists(p)) return;
  fs::create_directories(p.parent_path());
  const nlohmann::json j{{"Name", "segrun derivatives"},
                         {"BIDSVersion", "1.8.0"},
                         {"DatasetType", "derivative"},
                         {"GeneratedBy", {{{"Name", "segrun"}, {"Version", version}}}}};
  fsutil::write_atomic(p, j.dump(2) + "\n");
}

std::string subject_id_from_path(const fs::path& path) {
  static const std::regex sub_re("sub-([A-Za-z0-9]+)");
  const std::string name = path.filename().string();
  std::smatch m;
  if (std::regex_search(name, m, sub_re)) return m[1];
  std::string id;
  const std::string ext = image_extension(path);
  for (char c : name.substr(0, name.size() - ext.size())) {
    if (std::isalnum(static_cast<unsigned char>(c))) id += c;
  }
  if (id.empty()) throw Error(Errc::InvalidArgument, "cannot derive a subject id from " + path.string());
  return id;
}

std::vector<SubjectRecord> discover_subjects(const fs::path& dataset_dir, const fs::path& derivatives_root,
                                             bool with_flair) {
  if (!fs::is_directory(dataset_dir)) throw Error(Errc::IoError, "not a directory: " + dataset_dir.string());
  auto find_image = [](const fs::path& anat, const std::string& stem) -> std::optional<fs::path> {
    for (const char* ext : {".nii.gz", ".nii"}) {
      if (fs::exists(anat / (stem + ext))) return anat / (stem + ext);
    }
    return std::nullopt;
  };
  std::vector<SubjectRecord> out;
  for (const auto& entry : fs::directory_iterator(dataset_dir)) {
    const std::string dir = entry.path().filename().string();
    if (!entry.is_directory() || dir.rfind("sub-", 0) != 0) continue;
    const std::string id = dir.substr(4);
    if (!valid_label(id)) continue;
    const fs::path anat = entry.path() / "anat";
    auto t1 = find_image(anat, dir + "_T1w");
    if (!t1) continue;
    SubjectRecord rec{id, *t1, std::nullopt, derivatives_root};
    if (with_flair) {
      rec.flair_path = find_image(anat, dir + "_FLAIR");
      if (!rec.flair_path) throw Error(Errc::IoError, "subject " + id + " has no FLAIR image");
    }
    out.push_back(std::move(rec));
  }
  std::sort(out.begin(), out.end(), [](const auto& a, const auto& b) { return a.subject_id < b.subject_id; });
  return out;
}

}  // namespace bids
}  // namespace segrun
