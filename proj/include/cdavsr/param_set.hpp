#pragma once

#include <cstdint>
#include <filesystem>
#include <map>
#include <random>
#include <string>
#include <vector>

#include "cdavsr/autograd.hpp"

namespace cdavsr {

template <typename T>
struct ParamEntry {
  Tensor<T> value;
  bool trainable = true;
};

/// Named parameter tensors, iterated in lexicographic name order.
template <typename T>
class ParamSet {
 public:
  using Map = std::map<std::string, ParamEntry<T>>;

  void add(const std::string& name, Tensor<T> value, bool trainable = true);
  bool contains(const std::string& name) const { return entries_.contains(name); }
  const Tensor<T>& at(const std::string& name) const;
  Tensor<T>& mutable_at(const std::string& name);
  bool trainable(const std::string& name) const;

  std::size_t size() const noexcept { return entries_.size(); }
  std::vector<std::string> names() const;
  /// Sum of element counts over trainable entries.
  std::size_t trainable_elements() const;

  typename Map::const_iterator begin() const { return entries_.begin(); }
  typename Map::const_iterator end() const { return entries_.end(); }
  typename Map::iterator begin() { return entries_.begin(); }
  typename Map::iterator end() { return entries_.end(); }

  template <typename U>
  ParamSet<U> cast() const {
    ParamSet<U> out;
    for (const auto& [name, e] : entries_) out.add(name, e.value.template cast<U>(), e.trainable);
    return out;
  }

  bool operator==(const ParamSet& o) const;

 private:
  Map entries_;
};

/// Parameters exposed as graph values. Trainable entries become gradient
/// leaves when bound to a tape; otherwise everything is a constant.
template <typename T>
class BoundParams {
 public:
  static BoundParams constants(const ParamSet<T>& params);
  static BoundParams on_tape(Tape<T>& tape, const ParamSet<T>& params);

  const Var<T>& at(const std::string& name) const;
  bool contains(const std::string& name) const { return vars_.contains(name); }
  /// Gradient of every bound parameter (zeros where unreachable).
  std::map<std::string, Tensor<T>> grads() const;

 private:
  std::map<std::string, Var<T>> vars_;
};

// CDWT v1: magic "CDWT", u16 version, u32 count, then per tensor
// u16 name length, name, u8 rank, u32 extents, float32 payload.
std::vector<std::uint8_t> encode_cdwt(const ParamSet<float>& params);
ParamSet<float> decode_cdwt(std::span<const std::uint8_t> bytes);
void save_cdwt(const ParamSet<float>& params, const std::filesystem::path& path);
ParamSet<float> load_cdwt(const std::filesystem::path& path);

}  // namespace cdavsr
