#include "sisg/checkpoint.hpp"

#include <bit>
#include <cstring>
#include <fstream>
#include <sstream>
#include <stdexcept>

namespace sisg {

static_assert(std::endian::native == std::endian::little, "checkpoint I/O assumes a little-endian host");

namespace {

enum DType : uint8_t { kF32 = 0, kF64 = 1, kI64 = 2, kU8 = 3, kI32 = 4 };

DType dtype_code(torch::ScalarType t) {
  switch (t) {
    case torch::kFloat32:
      return kF32;
    case torch::kFloat64:
      return kF64;
    case torch::kInt64:
      return kI64;
    case torch::kUInt8:
      return kU8;
    case torch::kInt32:
      return kI32;
    default:
      throw std::invalid_argument(std::string("checkpoint: unsupported dtype ") + c10::toString(t));
  }
}

torch::ScalarType scalar_type(uint8_t code) {
  switch (code) {
    case kF32:
      return torch::kFloat32;
    case kF64:
      return torch::kFloat64;
    case kI64:
      return torch::kInt64;
    case kU8:
      return torch::kUInt8;
    case kI32:
      return torch::kInt32;
    default:
      throw std::runtime_error("checkpoint: unknown dtype code " + std::to_string(code));
  }
}

class Writer {
 public:
  template <typename T>
  void pod(T v) {
    char buf[sizeof(T)];
    std::memcpy(buf, &v, sizeof(T));
    out_.append(buf, sizeof(T));
  }
  void bytes(const void* p, size_t n) { out_.append(static_cast<const char*>(p), n); }
  void str(const std::string& s) {
    pod<uint32_t>(static_cast<uint32_t>(s.size()));
    bytes(s.data(), s.size());
  }
  std::string take() { return std::move(out_); }

 private:
  std::string out_;
};

class Reader {
 public:
  explicit Reader(const std::string& in) : in_(in) {}
  template <typename T>
  T pod() {
    need(sizeof(T));
    T v;
    std::memcpy(&v, in_.data() + pos_, sizeof(T));
    pos_ += sizeof(T);
    return v;
  }
  std::string raw(uint64_t n) {
    need(n);
    std::string s = in_.substr(pos_, n);
    pos_ += n;
    return s;
  }
  std::string str() { return raw(pod<uint32_t>()); }
  bool done() const { return pos_ == in_.size(); }

 private:
  void need(uint64_t n) const {
    if (n > in_.size() - pos_) throw std::runtime_error("checkpoint: truncated file");
  }
  const std::string& in_;
  size_t pos_ = 0;
};

}  // namespace

void Checkpoint::put(const std::string& name, const torch::Tensor& t) {
  if (has(name) || has_text(name)) throw std::invalid_argument("checkpoint: duplicate entry '" + name + "'");
  tensors.emplace_back(name, t.detach().cpu().contiguous().clone());
}

void Checkpoint::put_text(const std::string& name, std::string text) {
  if (has(name) || has_text(name)) throw std::invalid_argument("checkpoint: duplicate entry '" + name + "'");
  texts.emplace(name, std::move(text));
}

bool Checkpoint::has(const std::string& name) const {
  for (const auto& [n, t] : tensors) {
    if (n == name) return true;
  }
  return false;
}

const torch::Tensor& Checkpoint::get(const std::string& name) const {
  for (const auto& [n, t] : tensors) {
    if (n == name) return t;
  }
  throw std::runtime_error("checkpoint: missing tensor '" + name + "'");
}

const std::string& Checkpoint::text(const std::string& name) const {
  auto it = texts.find(name);
  if (it == texts.end()) throw std::runtime_error("checkpoint: missing text entry '" + name + "'");
  return it->second;
}

void Checkpoint::put_module(const std::string& prefix, const torch::nn::Module& module) {
  for (const auto& item : module.named_parameters(true)) put(prefix + "/" + item.key(), item.value());
  for (const auto& item : module.named_buffers(true)) put(prefix + "/" + item.key(), item.value());
}

void Checkpoint::restore_module(const std::string& prefix, torch::nn::Module& module) const {
  torch::NoGradGuard no_grad;
  auto copy = [&](const std::string& key, torch::Tensor& dst) {
    const auto& src = get(prefix + "/" + key);
    if (src.sizes() != dst.sizes() || src.scalar_type() != dst.scalar_type()) {
      throw std::runtime_error("checkpoint: entry '" + prefix + "/" + key + "' does not match the model");
    }
    dst.copy_(src);
  };
  for (auto& item : module.named_parameters(true)) copy(item.key(), item.value());
  for (auto& item : module.named_buffers(true)) copy(item.key(), item.value());
}

void Checkpoint::put_adam(const std::string& prefix, torch::optim::Adam& optimizer,
                          const std::vector<torch::Tensor>& params) {
  auto& state = optimizer.state();
  for (size_t i = 0; i < params.size(); ++i) {
    auto it = state.find(params[i].unsafeGetTensorImpl());
    if (it == state.end()) continue;
    const auto& s = static_cast<const torch::optim::AdamParamState&>(*it->second);
    const std::string base = prefix + "/" + std::to_string(i);
    put(base + "/step", torch::tensor(s.step(), torch::kInt64));
    put(base + "/exp_avg", s.exp_avg());
    put(base + "/exp_avg_sq", s.exp_avg_sq());
  }
}

void Checkpoint::restore_adam(const std::string& prefix, torch::optim::Adam& optimizer,
                              const std::vector<torch::Tensor>& params) const {
  auto& state = optimizer.state();
  for (size_t i = 0; i < params.size(); ++i) {
    const std::string base = prefix + "/" + std::to_string(i);
    void* key = params[i].unsafeGetTensorImpl();
    if (!has(base + "/step")) {
      state.erase(key);
      continue;
    }
    auto s = std::make_unique<torch::optim::AdamParamState>();
    s->step(get(base + "/step").item<int64_t>());
    s->exp_avg(get(base + "/exp_avg").clone());
    s->exp_avg_sq(get(base + "/exp_avg_sq").clone());
    if (s->exp_avg().sizes() != params[i].sizes()) {
      throw std::runtime_error("checkpoint: optimizer state '" + base + "' does not match the model");
    }
    state[key] = std::move(s);
  }
}

std::string Checkpoint::serialize() const {
  Writer w;
  w.bytes(kMagic, sizeof(kMagic));
  w.pod<uint32_t>(format_version);
  w.pod<int64_t>(epoch);
  w.pod<uint64_t>(config_hash);
  w.pod<uint32_t>(static_cast<uint32_t>(tensors.size() + texts.size()));
  for (const auto& [name, t] : tensors) {
    w.str(name);
    w.pod<uint8_t>(0);
    w.pod<uint8_t>(dtype_code(t.scalar_type()));
    w.pod<uint32_t>(static_cast<uint32_t>(t.dim()));
    for (int64_t d : t.sizes()) w.pod<int64_t>(d);
    const auto nbytes = static_cast<uint64_t>(t.numel()) * t.element_size();
    w.pod<uint64_t>(nbytes);
    w.bytes(t.data_ptr(), nbytes);
  }
  for (const auto& [name, text] : texts) {
    w.str(name);
    w.pod<uint8_t>(1);
    w.pod<uint64_t>(text.size());
    w.bytes(text.data(), text.size());
  }
  return w.take();
}

Checkpoint Checkpoint::deserialize(const std::string& bytes) {
  Reader r(bytes);
  if (r.raw(sizeof(kMagic)) != std::string(kMagic, sizeof(kMagic))) {
    throw std::runtime_error("checkpoint: bad magic (not a SISG1 file)");
  }
  Checkpoint c;
  c.format_version = r.pod<uint32_t>();
  if (c.format_version != kFormatVersion) {
    throw std::runtime_error("checkpoint: unsupported format version " + std::to_string(c.format_version));
  }
  c.epoch = r.pod<int64_t>();
  c.config_hash = r.pod<uint64_t>();
  const auto n = r.pod<uint32_t>();
  for (uint32_t i = 0; i < n; ++i) {
    std::string name = r.str();
    const auto kind = r.pod<uint8_t>();
    if (kind == 0) {
      const auto type = scalar_type(r.pod<uint8_t>());
      const auto ndim = r.pod<uint32_t>();
      std::vector<int64_t> dims(ndim);
      for (auto& d : dims) d = r.pod<int64_t>();
      const auto nbytes = r.pod<uint64_t>();
      auto t = torch::empty(dims, type);
      if (nbytes != static_cast<uint64_t>(t.numel()) * t.element_size()) {
        throw std::runtime_error("checkpoint: size mismatch in entry '" + name + "'");
      }
      auto raw = r.raw(nbytes);
      std::memcpy(t.data_ptr(), raw.data(), nbytes);
      c.put(name, t);
    } else if (kind == 1) {
      c.put_text(name, r.raw(r.pod<uint64_t>()));
    } else {
      throw std::runtime_error("checkpoint: unknown entry kind " + std::to_string(kind));
    }
  }
  if (!r.done()) throw std::runtime_error("checkpoint: trailing bytes");
  return c;
}

void Checkpoint::save(const std::filesystem::path& path) const {
  const auto bytes = serialize();
  auto tmp = path;
  tmp += ".tmp";
  {
    std::ofstream out(tmp, std::ios::binary);
    if (!out) throw std::runtime_error("cannot write checkpoint " + path.string());
    out.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
    if (!out) throw std::runtime_error("failed writing checkpoint " + path.string());
  }
  std::filesystem::rename(tmp, path);
}

Checkpoint Checkpoint::load(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw std::runtime_error("cannot open checkpoint " + path.string());
  std::stringstream ss;
  ss << in.rdbuf();
  return deserialize(ss.str());
}

void check_config_hash(const Checkpoint& ckpt, uint64_t expected, bool allow_override) {
  if (ckpt.config_hash != expected && !allow_override) {
    std::ostringstream os;
    os << "checkpoint config hash " << std::hex << ckpt.config_hash << " does not match the supplied config ("
       << expected << "); pass the override flag to load anyway";
    throw ConfigMismatch(os.str());
  }
}

uint64_t fnv1a64(const std::string& bytes) {
  uint64_t h = 0xcbf29ce484222325ULL;
  for (unsigned char c : bytes) {
    h ^= c;
    h *= 0x100000001b3ULL;
  }
  return h;
}

bool bitwise_equal(const torch::Tensor& a, const torch::Tensor& b) {
  if (a.sizes() != b.sizes() || a.scalar_type() != b.scalar_type()) return false;
  auto ca = a.detach().cpu().contiguous();
  auto cb = b.detach().cpu().contiguous();
  return std::memcmp(ca.data_ptr(), cb.data_ptr(), static_cast<size_t>(ca.numel()) * ca.element_size()) == 0;
}

}  // namespace sisg
