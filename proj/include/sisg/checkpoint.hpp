#pragma once

#include <torch/torch.h>

#include <cstdint>
#include <filesystem>
#include <map>
#include <string>
#include <vector>

namespace sisg {

/// Single-file binary checkpoint, little-endian throughout:
///
///   "SISG1" | u32 format_version | i64 epoch | u64 config_hash | u32 entry_count
///   entry := u32 name_len | name | u8 kind
///     kind 0 (tensor): u8 dtype | u32 ndim | i64 dims[ndim] | u64 byte_len | raw bytes
///     kind 1 (text):   u64 byte_len | bytes
///
/// Entries keep insertion order; names are unique.
struct Checkpoint {
  static constexpr char kMagic[5] = {'S', 'I', 'S', 'G', '1'};
  static constexpr uint32_t kFormatVersion = 1;

  uint32_t format_version = kFormatVersion;
  int64_t epoch = 0;
  uint64_t config_hash = 0;
  std::vector<std::pair<std::string, torch::Tensor>> tensors;
  std::map<std::string, std::string> texts;

  void put(const std::string& name, const torch::Tensor& t);
  void put_text(const std::string& name, std::string text);
  bool has(const std::string& name) const;
  bool has_text(const std::string& name) const { return texts.count(name) > 0; }
  const torch::Tensor& get(const std::string& name) const;
  const std::string& text(const std::string& name) const;

  /// Every parameter and buffer of `module` under "<prefix>/<qualified name>".
  void put_module(const std::string& prefix, const torch::nn::Module& module);
  /// Copies saved values into `module`; throws if an entry is missing or misshapen.
  void restore_module(const std::string& prefix, torch::nn::Module& module) const;

  /// Adam step/moment state for `params` (in order) under "<prefix>/<index>/...".
  void put_adam(const std::string& prefix, torch::optim::Adam& optimizer, const std::vector<torch::Tensor>& params);
  void restore_adam(const std::string& prefix, torch::optim::Adam& optimizer,
                    const std::vector<torch::Tensor>& params) const;

  void save(const std::filesystem::path& path) const;
  static Checkpoint load(const std::filesystem::path& path);

  std::string serialize() const;
  static Checkpoint deserialize(const std::string& bytes);
};

/// Raised when a checkpoint's config hash differs from the supplied config.
class ConfigMismatch : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

void check_config_hash(const Checkpoint& ckpt, uint64_t expected, bool allow_override);

/// FNV-1a, 64 bit.
uint64_t fnv1a64(const std::string& bytes);

bool bitwise_equal(const torch::Tensor& a, const torch::Tensor& b);

}  // namespace sisg
