#include "jras/dataset.hpp"

#include <algorithm>
#include <cmath>
#include <cstring>
#include <fstream>
#include <map>
#include <nlohmann/json.hpp>
#include <random>
#include <sstream>

#include "jras/checkpoint.hpp"
#include "jras/errors.hpp"

namespace jras {

namespace fs = std::filesystem;
using nlohmann::json;

std::string_view phase_name(Phase phase) noexcept { return phase == Phase::ED ? "ED" : "ES"; }

Phase parse_phase(std::string_view text) {
  if (text == "ED") return Phase::ED;
  if (text == "ES") return Phase::ES;
  throw ArgumentError("unknown phase '" + std::string(text) + "' (expected ED or ES)");
}

std::string SliceRef::str() const {
  return patient_id + "/" + std::string(phase_name(phase)) + "/" + std::to_string(slice_index);
}

std::string CaseId::str() const { return patient_id + "/" + std::string(phase_name(phase)); }

SliceRef parse_slice_ref(std::string_view text) {
  const auto a = text.find('/');
  const auto b = a == std::string_view::npos ? a : text.find('/', a + 1);
  if (a == std::string_view::npos || b == std::string_view::npos || a == 0) {
    throw ArgumentError("slice reference must look like PATIENT/PHASE/INDEX, got '" +
                        std::string(text) + "'");
  }
  SliceRef ref;
  ref.patient_id = std::string(text.substr(0, a));
  ref.phase = parse_phase(text.substr(a + 1, b - a - 1));
  const std::string idx(text.substr(b + 1));
  std::size_t used = 0;
  try {
    ref.slice_index = std::stoi(idx, &used);
  } catch (const std::exception&) {
    used = 0;
  }
  if (used != idx.size() || idx.empty() || ref.slice_index < 0) {
    throw ArgumentError("bad slice index in '" + std::string(text) + "'");
  }
  return ref;
}

LabelMap::LabelMap(int height, int width, std::uint8_t fill)
    : height_(height), width_(width),
      labels_(static_cast<std::size_t>(height) * static_cast<std::size_t>(width), fill) {
  if (height < 0 || width < 0) throw ArgumentError("LabelMap: negative size");
}

LabelMap::LabelMap(int height, int width, std::vector<std::uint8_t> labels)
    : height_(height), width_(width), labels_(std::move(labels)) {
  if (labels_.size() != static_cast<std::size_t>(height) * static_cast<std::size_t>(width)) {
    throw ArgumentError("LabelMap: " + std::to_string(labels_.size()) + " labels for " +
                        std::to_string(height) + "x" + std::to_string(width));
  }
}

std::uint8_t LabelMap::max_label() const noexcept {
  return labels_.empty() ? 0 : *std::max_element(labels_.begin(), labels_.end());
}

// ---- Dataset ---------------------------------------------------------------

Dataset::Dataset(std::vector<SliceRecord> slices, int num_classes)
    : slices_(std::move(slices)), num_classes_(num_classes) {
  if (slices_.empty()) throw ValidationError("dataset has no slices");
  if (num_classes_ < 2 || num_classes_ > 256) {
    throw ValidationError("num_classes must be in [2, 256], got " + std::to_string(num_classes_));
  }
  height_ = static_cast<int>(slices_.front().image.rank() == 2 ? slices_.front().image.dim(0) : 0);
  width_ = static_cast<int>(slices_.front().image.rank() == 2 ? slices_.front().image.dim(1) : 0);
  for (const auto& s : slices_) {
    if (s.image.rank() != 2 || s.image.dim(0) != height_ || s.image.dim(1) != width_) {
      throw ValidationError("slice " + s.ref.str() + ": image shape " +
                            shape_to_string(s.image.shape()) + " differs from dataset " +
                            std::to_string(height_) + "x" + std::to_string(width_));
    }
    if (s.mask.height() != height_ || s.mask.width() != width_) {
      throw ValidationError("slice " + s.ref.str() + ": mask shape mismatch");
    }
    if (s.mask.max_label() >= num_classes_) {
      throw ValidationError("slice " + s.ref.str() + ": mask label " +
                            std::to_string(s.mask.max_label()) + " >= num_classes " +
                            std::to_string(num_classes_));
    }
    if (s.ref.slice_index < 0) throw ValidationError("slice " + s.ref.str() + ": negative index");
  }
  std::sort(slices_.begin(), slices_.end(),
            [](const SliceRecord& a, const SliceRecord& b) { return a.ref < b.ref; });
  for (std::size_t i = 1; i < slices_.size(); ++i) {
    if (slices_[i].ref == slices_[i - 1].ref) {
      throw ValidationError("duplicate slice " + slices_[i].ref.str());
    }
  }
}

std::vector<std::string> Dataset::patient_ids() const {
  std::vector<std::string> ids;
  for (const auto& s : slices_) {
    if (ids.empty() || ids.back() != s.ref.patient_id) ids.push_back(s.ref.patient_id);
  }
  return ids;
}

std::vector<CaseId> Dataset::case_ids() const {
  std::vector<CaseId> ids;
  for (const auto& s : slices_) {
    CaseId c = s.case_id();
    if (ids.empty() || ids.back() != c) ids.push_back(std::move(c));
  }
  return ids;
}

Dataset Dataset::subset(const std::set<std::string>& patients) const {
  std::vector<SliceRecord> picked;
  for (const auto& s : slices_) {
    if (patients.count(s.ref.patient_id)) picked.push_back(s);
  }
  return Dataset(std::move(picked), num_classes_);
}

const SliceRecord* Dataset::find(const SliceRef& ref) const {
  auto it = std::lower_bound(slices_.begin(), slices_.end(), ref,
                             [](const SliceRecord& s, const SliceRef& r) { return s.ref < r; });
  return (it != slices_.end() && it->ref == ref) ? &*it : nullptr;
}

// ---- manifest --------------------------------------------------------------

std::size_t DatasetManifest::total_slices() const {
  std::size_t n = 0;
  for (const auto& p : patients) n += static_cast<std::size_t>(p.ed_slices + p.es_slices);
  return n;
}

std::string DatasetManifest::to_json_text() const {
  json j;
  j["version"] = version;
  j["height"] = height;
  j["width"] = width;
  j["num_classes"] = num_classes;
  j["patients"] = json::array();
  for (const auto& p : patients) {
    j["patients"].push_back({{"id", p.id}, {"phases", {{"ED", p.ed_slices}, {"ES", p.es_slices}}}});
  }
  return j.dump(2) + "\n";
}

DatasetManifest DatasetManifest::from_json_text(std::string_view text) {
  json j;
  try {
    j = json::parse(text);
  } catch (const json::parse_error& e) {
    throw ValidationError(std::string("manifest is not valid JSON: ") + e.what());
  }
  std::vector<std::string> problems;
  DatasetManifest m;
  auto read_int = [&](const char* key, int& into, int min_value) {
    if (!j.contains(key) || !j[key].is_number_integer()) {
      problems.push_back(std::string("missing integer field '") + key + "'");
      return;
    }
    into = j[key].get<int>();
    if (into < min_value) {
      problems.push_back(std::string("field '") + key + "' must be >= " + std::to_string(min_value));
    }
  };
  if (!j.is_object()) throw ValidationError("manifest must be a JSON object");
  read_int("version", m.version, 1);
  read_int("height", m.height, 1);
  read_int("width", m.width, 1);
  read_int("num_classes", m.num_classes, 2);
  if (m.version != 1) problems.push_back("unsupported manifest version " + std::to_string(m.version));
  if (m.num_classes > 256) problems.push_back("num_classes must be <= 256 for uint8 masks");
  if (!j.contains("patients") || !j["patients"].is_array() || j["patients"].empty()) {
    problems.push_back("'patients' must be a non-empty array");
  } else {
    std::set<std::string> seen;
    for (std::size_t i = 0; i < j["patients"].size(); ++i) {
      const auto& p = j["patients"][i];
      const std::string where = "patients[" + std::to_string(i) + "]";
      if (!p.is_object() || !p.contains("id") || !p["id"].is_string() ||
          p["id"].get<std::string>().empty()) {
        problems.push_back(where + ": missing string 'id'");
        continue;
      }
      PatientEntry e;
      e.id = p["id"].get<std::string>();
      if (e.id.find_first_of("/_ \\") != std::string::npos) {
        problems.push_back(where + ": id '" + e.id + "' must not contain '/', '_', '\\' or spaces");
      }
      if (!seen.insert(e.id).second) problems.push_back(where + ": duplicate id '" + e.id + "'");
      if (!p.contains("phases") || !p["phases"].is_object()) {
        problems.push_back(where + ": missing 'phases' object");
        continue;
      }
      for (const auto& [key, value] : p["phases"].items()) {
        if (key != "ED" && key != "ES") problems.push_back(where + ": unknown phase '" + key + "'");
        else if (!value.is_number_integer() || value.get<int>() < 0)
          problems.push_back(where + ": phase " + key + " count must be a non-negative integer");
        else (key == "ED" ? e.ed_slices : e.es_slices) = value.get<int>();
      }
      if (e.ed_slices + e.es_slices == 0) problems.push_back(where + ": patient has no slices");
      m.patients.push_back(std::move(e));
    }
  }
  if (!problems.empty()) {
    std::string msg = "invalid manifest:";
    for (const auto& p : problems) msg += "\n  - " + p;
    throw ValidationError(msg);
  }
  return m;
}

fs::path slice_stem(const SliceRef& ref) {
  return ref.patient_id + "_" + std::string(phase_name(ref.phase)) + "_" +
         std::to_string(ref.slice_index);
}

namespace {

fs::path manifest_file(const fs::path& p) {
  return fs::is_directory(p) ? p / "manifest.json" : p;
}

std::vector<SliceRef> manifest_refs(const DatasetManifest& m) {
  std::vector<SliceRef> refs;
  for (const auto& p : m.patients) {
    for (int i = 0; i < p.ed_slices; ++i) refs.push_back({p.id, Phase::ED, i});
    for (int i = 0; i < p.es_slices; ++i) refs.push_back({p.id, Phase::ES, i});
  }
  return refs;
}

SliceRecord read_slice(const fs::path& dir, const SliceRef& ref, const DatasetManifest& m) {
  const fs::path stem = dir / "slices" / slice_stem(ref);
  const auto pixels = static_cast<std::size_t>(m.height) * static_cast<std::size_t>(m.width);
  fs::path img_path = stem;
  img_path += ".img";
  fs::path msk_path = stem;
  msk_path += ".msk";

  std::string img_raw, msk_raw;
  try {
    img_raw = io::read_file(img_path);
    msk_raw = io::read_file(msk_path);
  } catch (const LoadError& e) {
    throw LoadError("slice " + ref.str() + ": " + e.what());
  }
  if (img_raw.size() != pixels * sizeof(float)) {
    throw ValidationError("slice " + ref.str() + ": image file has " +
                          std::to_string(img_raw.size()) + " bytes, shape " +
                          std::to_string(m.height) + "x" + std::to_string(m.width) + " needs " +
                          std::to_string(pixels * sizeof(float)));
  }
  if (msk_raw.size() != pixels) {
    throw ValidationError("slice " + ref.str() + ": mask file has " +
                          std::to_string(msk_raw.size()) + " bytes, expected " +
                          std::to_string(pixels));
  }
  SliceRecord rec;
  rec.ref = ref;
  rec.image = Tensor({m.height, m.width});
  for (std::size_t i = 0; i < pixels; ++i) {
    float f;
    std::memcpy(&f, img_raw.data() + i * sizeof(float), sizeof(float));
    if (!std::isfinite(f)) throw ValidationError("slice " + ref.str() + ": non-finite intensity");
    rec.image[static_cast<std::int64_t>(i)] = f;
  }
  normalize_min_max(rec.image);
  std::vector<std::uint8_t> labels(msk_raw.begin(), msk_raw.end());
  rec.mask = LabelMap(m.height, m.width, std::move(labels));
  if (rec.mask.max_label() >= m.num_classes) {
    throw ValidationError("slice " + ref.str() + ": mask label " +
                          std::to_string(rec.mask.max_label()) + " >= num_classes " +
                          std::to_string(m.num_classes));
  }
  return rec;
}

}  // namespace

DatasetManifest read_manifest(const fs::path& manifest_path) {
  const fs::path file = manifest_file(manifest_path);
  return DatasetManifest::from_json_text(io::read_file(file));
}

Dataset load_dataset(const fs::path& manifest_path) {
  const fs::path file = manifest_file(manifest_path);
  DatasetManifest m = read_manifest(file);
  const fs::path dir = file.parent_path();
  std::vector<SliceRecord> slices;
  for (const auto& ref : manifest_refs(m)) slices.push_back(read_slice(dir, ref, m));
  return Dataset(std::move(slices), m.num_classes);
}

void save_dataset(const Dataset& dataset, const fs::path& directory) {
  DatasetManifest m;
  m.height = dataset.height();
  m.width = dataset.width();
  m.num_classes = dataset.num_classes();
  std::map<std::string, PatientEntry> patients;
  for (const auto& s : dataset) {
    auto& e = patients[s.ref.patient_id];
    e.id = s.ref.patient_id;
    (s.ref.phase == Phase::ED ? e.ed_slices : e.es_slices) += 1;
  }
  for (auto& [id, e] : patients) m.patients.push_back(e);

  fs::create_directories(directory / "slices");
  for (const auto& s : dataset) {
    const fs::path stem = directory / "slices" / slice_stem(s.ref);
    std::string img(static_cast<std::size_t>(s.image.numel()) * sizeof(float), '\0');
    for (std::int64_t i = 0; i < s.image.numel(); ++i) {
      const float f = static_cast<float>(s.image[i]);
      std::memcpy(img.data() + static_cast<std::size_t>(i) * sizeof(float), &f, sizeof(float));
    }
    fs::path img_path = stem, msk_path = stem;
    img_path += ".img";
    msk_path += ".msk";
    io::write_file_atomic(img_path, img);
    io::write_file_atomic(msk_path,
                          std::string(s.mask.labels().begin(), s.mask.labels().end()));
  }
  // Manifest last: its presence marks a complete dataset.
  io::write_file_atomic(directory / "manifest.json", m.to_json_text());
}

std::vector<std::string> validate_dataset(const fs::path& manifest_path) {
  std::vector<std::string> problems;
  DatasetManifest m;
  try {
    m = read_manifest(manifest_path);
  } catch (const std::exception& e) {
    problems.emplace_back(e.what());
    return problems;
  }
  const fs::path dir = manifest_file(manifest_path).parent_path();
  std::set<std::string> expected;
  for (const auto& ref : manifest_refs(m)) {
    expected.insert(slice_stem(ref).string());
    try {
      read_slice(dir, ref, m);
    } catch (const std::exception& e) {
      problems.emplace_back(e.what());
    }
  }
  if (fs::is_directory(dir / "slices")) {
    for (const auto& entry : fs::directory_iterator(dir / "slices")) {
      const auto ext = entry.path().extension();
      if ((ext == ".img" || ext == ".msk") && !expected.count(entry.path().stem().string())) {
        problems.push_back("file not listed in manifest: " + entry.path().filename().string());
      }
    }
  }
  return problems;
}

// ---- splitting and lifting -------------------------------------------------

std::pair<Dataset, Dataset> split_by_patient(const Dataset& dataset, const SplitSpec& spec) {
  if (!(spec.train_fraction > 0.0 && spec.train_fraction < 1.0)) {
    throw ArgumentError("train_fraction must lie in (0, 1)");
  }
  std::vector<std::string> ids = dataset.patient_ids();
  if (ids.size() < 2) throw ArgumentError("split_by_patient needs at least 2 patients");
  const auto n_train = static_cast<std::size_t>(
      std::llround(spec.train_fraction * static_cast<double>(ids.size())));
  if (n_train == 0 || n_train >= ids.size()) {
    throw ArgumentError("train_fraction " + std::to_string(spec.train_fraction) + " with " +
                        std::to_string(ids.size()) + " patients leaves a split empty");
  }
  std::mt19937_64 rng(spec.seed);
  std::shuffle(ids.begin(), ids.end(), rng);
  std::set<std::string> train(ids.begin(), ids.begin() + static_cast<std::ptrdiff_t>(n_train));
  std::set<std::string> val(ids.begin() + static_cast<std::ptrdiff_t>(n_train), ids.end());
  return {dataset.subset(train), dataset.subset(val)};
}

void normalize_min_max(Tensor& image) {
  if (image.empty()) return;
  const auto [lo, hi] = std::minmax_element(image.data(), image.data() + image.numel());
  const double mn = *lo, mx = *hi;
  if (mx > mn) {
    const double range = mx - mn;
    for (auto& v : image.values()) v = (v - mn) / range;
  } else {
    image.fill(0.0);
  }
}

Tensor to_three_channel(const Tensor& image) {
  if (image.rank() != 2) throw ArgumentError("to_three_channel expects {H,W}");
  const auto h = image.dim(0), w = image.dim(1);
  Tensor out({3, h, w});
  for (int c = 0; c < 3; ++c) std::copy(image.data(), image.data() + h * w, out.data() + c * h * w);
  return out;
}

}  // namespace jras
