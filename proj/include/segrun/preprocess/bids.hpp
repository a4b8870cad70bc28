#pragma once

#include <filesystem>
#include <optional>
#include <regex>
#include <string>
#include <vector>

namespace segrun {

/// One subject's inputs and where its derivatives go.
struct SubjectRecord {
  std::string subject_id;
  std::filesystem::path t1w_path;
  std::optional<std::filesystem::path> flair_path;
  /// The dataset's `derivatives` directory; outputs land in `<root>/segrun/sub-<ID>/anat`.
  std::filesystem::path derivatives_root;

  void validate() const;
};

namespace bids {

enum class Space { Orig, MNI152 };

std::string space_label(Space space);

bool valid_label(const std::string& label);

/// `<root>/segrun/sub-<ID>/anat`
std::filesystem::path anat_dir(const std::filesystem::path& derivatives_root, const std::string& subject_id);

/// `sub-<ID>_space-<space>_desc-<desc>_<suffix><ext>`
std::string file_name(const std::string& subject_id, Space space, const std::string& desc, const std::string& suffix,
                      const std::string& ext = ".nii.gz");

std::filesystem::path derivative_path(const SubjectRecord& subject, Space space, const std::string& desc,
                                      const std::string& suffix, const std::string& ext = ".nii.gz");

/// Per-run provenance file: `sub-<ID>_desc-run_provenance.json`.
std::filesystem::path run_provenance_path(const SubjectRecord& subject);

/// Sidecar next to an image: same stem, `.json`.
std::filesystem::path sidecar_path(const std::filesystem::path& image);

/// Grammar every emitted derivative filename matches.
const std::regex& filename_grammar();

/// Writes `<root>/segrun/dataset_description.json` if absent.
void ensure_dataset_description(const std::filesystem::path& derivatives_root, const std::string& version);

/// Subject label from a BIDS filename (`sub-XX_...`) or, failing that, the
/// alphanumeric characters of the file stem.
std::string subject_id_from_path(const std::filesystem::path& path);

/// Subjects in a BIDS dataset: `sub-*/anat/sub-*_T1w.nii[.gz]` with an
/// optional `_FLAIR` sibling (only attached when `with_flair`).
std::vector<SubjectRecord> discover_subjects(const std::filesystem::path& dataset_dir,
                                             const std::filesystem::path& derivatives_root, bool with_flair);

}  // namespace bids
}  // namespace segrun
