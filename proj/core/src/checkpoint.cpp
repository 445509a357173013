#include "jras/checkpoint.hpp"

#include <bit>
#include <cstdint>
#include <cstring>
#include <fstream>
#include <iomanip>
#include <sstream>

#include "jras/errors.hpp"

namespace jras::io {

static_assert(std::endian::native == std::endian::little,
              "tensor bundles are written in host order; big-endian hosts need byte swapping");

namespace {

constexpr char kTensorMagic[8] = {'J', 'R', 'A', 'S', 'T', 'N', 'S', '1'};

template <typename T>
void put(std::string& out, T value) {
  char buf[sizeof(T)];
  std::memcpy(buf, &value, sizeof(T));
  out.append(buf, sizeof(T));
}

class Reader {
 public:
  Reader(const std::string& data, std::string source) : data_(data), source_(std::move(source)) {}

  template <typename T>
  T get() {
    need(sizeof(T));
    T value;
    std::memcpy(&value, data_.data() + pos_, sizeof(T));
    pos_ += sizeof(T);
    return value;
  }
  std::string bytes(std::size_t n) {
    need(n);
    std::string s = data_.substr(pos_, n);
    pos_ += n;
    return s;
  }
  bool done() const { return pos_ == data_.size(); }

 private:
  void need(std::size_t n) const {
    if (pos_ + n > data_.size()) throw LoadError("truncated tensor bundle: " + source_);
  }
  const std::string& data_;
  std::string source_;
  std::size_t pos_ = 0;
};

}  // namespace

void write_file_atomic(const std::filesystem::path& path, const std::string& contents) {
  if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
  auto tmp = path;
  tmp += ".tmp";
  {
    std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
    if (!out) throw LoadError("cannot open for writing: " + tmp.string());
    out.write(contents.data(), static_cast<std::streamsize>(contents.size()));
    if (!out) throw LoadError("write failed: " + tmp.string());
  }
  std::filesystem::rename(tmp, path);
}

std::string read_file(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw LoadError("cannot open: " + path.string());
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

void save_tensors(const std::filesystem::path& path, const NamedTensors& tensors) {
  std::string out(kTensorMagic, sizeof(kTensorMagic));
  put<std::uint32_t>(out, static_cast<std::uint32_t>(tensors.size()));
  for (const auto& [name, t] : tensors) {
    put<std::uint32_t>(out, static_cast<std::uint32_t>(name.size()));
    out += name;
    put<std::uint32_t>(out, static_cast<std::uint32_t>(t.rank()));
    for (auto d : t.shape()) put<std::int64_t>(out, d);
    out.append(reinterpret_cast<const char*>(t.data()),
               static_cast<std::size_t>(t.numel()) * sizeof(double));
  }
  write_file_atomic(path, out);
}

NamedTensors load_tensors(const std::filesystem::path& path) {
  const std::string data = read_file(path);
  Reader r(data, path.string());
  if (r.bytes(sizeof(kTensorMagic)) != std::string(kTensorMagic, sizeof(kTensorMagic))) {
    throw LoadError("not a tensor bundle: " + path.string());
  }
  const auto count = r.get<std::uint32_t>();
  NamedTensors out;
  out.reserve(count);
  for (std::uint32_t i = 0; i < count; ++i) {
    std::string name = r.bytes(r.get<std::uint32_t>());
    const auto rank = r.get<std::uint32_t>();
    if (rank > 8) throw LoadError("implausible tensor rank in " + path.string());
    Shape shape(rank);
    for (auto& d : shape) d = r.get<std::int64_t>();
    std::vector<double> values(static_cast<std::size_t>(shape_numel(shape)));
    const std::string raw = r.bytes(values.size() * sizeof(double));
    std::memcpy(values.data(), raw.data(), raw.size());
    out.emplace_back(std::move(name), Tensor(std::move(shape), std::move(values)));
  }
  if (!r.done()) throw LoadError("trailing bytes in tensor bundle: " + path.string());
  return out;
}

void save_parameters(const std::filesystem::path& path, const nn::ParameterList& params) {
  NamedTensors tensors;
  tensors.reserve(params.size());
  for (const auto& p : params) tensors.emplace_back(p.name, p.param->value());
  save_tensors(path, tensors);
}

void load_parameters(const std::filesystem::path& path, nn::ParameterList& params) {
  NamedTensors tensors = load_tensors(path);
  if (tensors.size() != params.size()) {
    throw ValidationError(path.string() + ": expected " + std::to_string(params.size()) +
                          " parameters, found " + std::to_string(tensors.size()));
  }
  for (std::size_t i = 0; i < params.size(); ++i) {
    if (tensors[i].first != params[i].name ||
        tensors[i].second.shape() != params[i].param->value().shape()) {
      throw ValidationError(path.string() + ": parameter " + std::to_string(i) + " is '" +
                            tensors[i].first + "' " + shape_to_string(tensors[i].second.shape()) +
                            ", model expects '" + params[i].name + "' " +
                            shape_to_string(params[i].param->value().shape()));
    }
  }
  for (std::size_t i = 0; i < params.size(); ++i) {
    params[i].param->mutable_value() = std::move(tensors[i].second);
  }
}

void save_adam_state(const std::filesystem::path& path, const optim::AdamState& state) {
  NamedTensors tensors;
  tensors.emplace_back("step", Tensor({1}, static_cast<double>(state.step)));
  for (std::size_t i = 0; i < state.first_moment.size(); ++i) {
    tensors.emplace_back("m" + std::to_string(i), state.first_moment[i]);
    tensors.emplace_back("v" + std::to_string(i), state.second_moment[i]);
  }
  save_tensors(path, tensors);
}

optim::AdamState load_adam_state(const std::filesystem::path& path) {
  NamedTensors tensors = load_tensors(path);
  if (tensors.empty() || tensors[0].first != "step" || tensors.size() % 2 != 1) {
    throw ValidationError("malformed optimizer state: " + path.string());
  }
  optim::AdamState state;
  state.step = static_cast<std::int64_t>(tensors[0].second[0]);
  for (std::size_t i = 1; i < tensors.size(); i += 2) {
    state.first_moment.push_back(std::move(tensors[i].second));
    state.second_moment.push_back(std::move(tensors[i + 1].second));
  }
  return state;
}

std::string content_hash(std::string_view data) {
  std::uint64_t h = 14695981039346656037ULL;
  for (unsigned char c : data) {
    h ^= c;
    h *= 1099511628211ULL;
  }
  std::ostringstream out;
  out << std::hex << std::setw(16) << std::setfill('0') << h;
  return out.str();
}

}  // namespace jras::io
