#pragma once

// Slice-level dataset model, on-disk format, and patient-level splitting.
//
// On disk a dataset is a directory holding `manifest.json` and `slices/`.
// Each slice `<patient>_<phase>_<index>` has a `.img` file (H*W little-endian
// float32, row-major, no header) and a `.msk` file (H*W uint8 labels). The
// dimensions live only in the manifest.

#include <compare>
#include <cstdint>
#include <filesystem>
#include <set>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

#include "jras/tensor.hpp"

namespace jras {

enum class Phase : std::uint8_t { ED = 0, ES = 1 };

std::string_view phase_name(Phase phase) noexcept;
// Accepts "ED"/"ES"; throws ArgumentError otherwise.
Phase parse_phase(std::string_view text);

struct SliceRef {
  std::string patient_id;
  Phase phase = Phase::ED;
  int slice_index = 0;

  auto operator<=>(const SliceRef&) const = default;
  std::string str() const;  // "P001/ED/3"
};

// "P001/ED/3" -> SliceRef; throws ArgumentError on malformed input.
SliceRef parse_slice_ref(std::string_view text);

// One evaluation unit: a (patient, phase) volume.
struct CaseId {
  std::string patient_id;
  Phase phase = Phase::ED;

  auto operator<=>(const CaseId&) const = default;
  std::string str() const;  // "P001/ED"
};

class LabelMap {
 public:
  LabelMap() = default;
  LabelMap(int height, int width, std::uint8_t fill = 0);
  LabelMap(int height, int width, std::vector<std::uint8_t> labels);

  int height() const noexcept { return height_; }
  int width() const noexcept { return width_; }
  std::size_t size() const noexcept { return labels_.size(); }
  std::uint8_t& at(int y, int x) { return labels_[static_cast<std::size_t>(y) * width_ + x]; }
  std::uint8_t at(int y, int x) const { return labels_[static_cast<std::size_t>(y) * width_ + x]; }
  std::uint8_t operator[](std::size_t i) const { return labels_[i]; }
  std::uint8_t& operator[](std::size_t i) { return labels_[i]; }
  const std::vector<std::uint8_t>& labels() const noexcept { return labels_; }
  std::uint8_t max_label() const noexcept;

  friend bool operator==(const LabelMap&, const LabelMap&) = default;

 private:
  int height_ = 0;
  int width_ = 0;
  std::vector<std::uint8_t> labels_;
};

struct SliceRecord {
  SliceRef ref;
  Tensor image;    // {H, W}, min-max normalised to [0, 1]
  LabelMap mask;   // H x W labels in [0, C)

  CaseId case_id() const { return {ref.patient_id, ref.phase}; }
};

class Dataset {
 public:
  Dataset() = default;
  // Validates shapes, label range and slice uniqueness, then sorts by
  // (patient_id, phase, slice_index). Throws ValidationError.
  Dataset(std::vector<SliceRecord> slices, int num_classes);

  const std::vector<SliceRecord>& slices() const noexcept { return slices_; }
  std::size_t size() const noexcept { return slices_.size(); }
  bool empty() const noexcept { return slices_.empty(); }
  int num_classes() const noexcept { return num_classes_; }
  int height() const noexcept { return height_; }
  int width() const noexcept { return width_; }
  const SliceRecord& operator[](std::size_t i) const { return slices_[i]; }
  auto begin() const noexcept { return slices_.begin(); }
  auto end() const noexcept { return slices_.end(); }

  std::vector<std::string> patient_ids() const;  // sorted, unique
  std::vector<CaseId> case_ids() const;          // sorted, unique
  Dataset subset(const std::set<std::string>& patients) const;
  const SliceRecord* find(const SliceRef& ref) const;

 private:
  std::vector<SliceRecord> slices_;
  int num_classes_ = 0;
  int height_ = 0;
  int width_ = 0;
};

struct PatientEntry {
  std::string id;
  int ed_slices = 0;
  int es_slices = 0;
};

struct DatasetManifest {
  int version = 1;
  int height = 0;
  int width = 0;
  int num_classes = 0;
  std::vector<PatientEntry> patients;

  std::size_t total_slices() const;
  std::string to_json_text() const;
  // Throws ValidationError naming every schema problem found.
  static DatasetManifest from_json_text(std::string_view text);
};

std::filesystem::path slice_stem(const SliceRef& ref);  // "P001_ED_3"

DatasetManifest read_manifest(const std::filesystem::path& manifest_path);

// `manifest_path` may name the manifest file or its directory.
Dataset load_dataset(const std::filesystem::path& manifest_path);
void save_dataset(const Dataset& dataset, const std::filesystem::path& directory);

// Every problem found in a dataset directory; empty when it loads cleanly.
std::vector<std::string> validate_dataset(const std::filesystem::path& manifest_path);

struct SplitSpec {
  double train_fraction = 0.8;
  std::uint64_t seed = 0;
};

// Patient-level split: round(train_fraction * patients) go to the first
// dataset. Throws ArgumentError if either side would be empty.
std::pair<Dataset, Dataset> split_by_patient(const Dataset& dataset, const SplitSpec& spec);

void normalize_min_max(Tensor& image);
// {H, W} grayscale -> {3, H, W} by replication.
Tensor to_three_channel(const Tensor& image);

}  // namespace jras
