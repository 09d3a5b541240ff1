#include "cdavsr/param_set.hpp"

#include <fstream>
#include <iterator>

#include "cdavsr/binary_io.hpp"

namespace cdavsr {

std::vector<std::uint8_t> read_file(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open " + path.string());
  return std::vector<std::uint8_t>(std::istreambuf_iterator<char>(in),
                                   std::istreambuf_iterator<char>());
}

void write_file(const std::filesystem::path& path, std::span<const std::uint8_t> bytes) {
  if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
  std::ofstream out(path, std::ios::binary);
  if (!out) throw IoError("cannot write " + path.string());
  out.write(reinterpret_cast<const char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
  if (!out) throw IoError("write failed for " + path.string());
}

template <typename T>
void ParamSet<T>::add(const std::string& name, Tensor<T> value, bool trainable) {
  require(!name.empty(), "parameter name must not be empty");
  auto [it, inserted] = entries_.emplace(name, ParamEntry<T>{std::move(value), trainable});
  require(inserted, "duplicate parameter name " + name);
}

template <typename T>
const Tensor<T>& ParamSet<T>::at(const std::string& name) const {
  auto it = entries_.find(name);
  require(it != entries_.end(), "missing parameter " + name);
  return it->second.value;
}

template <typename T>
Tensor<T>& ParamSet<T>::mutable_at(const std::string& name) {
  auto it = entries_.find(name);
  require(it != entries_.end(), "missing parameter " + name);
  return it->second.value;
}

template <typename T>
bool ParamSet<T>::trainable(const std::string& name) const {
  auto it = entries_.find(name);
  require(it != entries_.end(), "missing parameter " + name);
  return it->second.trainable;
}

template <typename T>
std::vector<std::string> ParamSet<T>::names() const {
  std::vector<std::string> out;
  out.reserve(entries_.size());
  for (const auto& [name, e] : entries_) out.push_back(name);
  return out;
}

template <typename T>
std::size_t ParamSet<T>::trainable_elements() const {
  std::size_t n = 0;
  for (const auto& [name, e] : entries_)
    if (e.trainable) n += e.value.size();
  return n;
}

template <typename T>
bool ParamSet<T>::operator==(const ParamSet& o) const {
  if (entries_.size() != o.entries_.size()) return false;
  auto a = entries_.begin();
  auto b = o.entries_.begin();
  for (; a != entries_.end(); ++a, ++b) {
    if (a->first != b->first || a->second.trainable != b->second.trainable ||
        !(a->second.value == b->second.value))
      return false;
  }
  return true;
}

template <typename T>
BoundParams<T> BoundParams<T>::constants(const ParamSet<T>& params) {
  BoundParams b;
  for (const auto& [name, e] : params) b.vars_.emplace(name, Var<T>(e.value));
  return b;
}

template <typename T>
BoundParams<T> BoundParams<T>::on_tape(Tape<T>& tape, const ParamSet<T>& params) {
  BoundParams b;
  for (const auto& [name, e] : params) {
    b.vars_.emplace(name, e.trainable ? tape.leaf(e.value, true) : Var<T>(e.value));
  }
  return b;
}

template <typename T>
const Var<T>& BoundParams<T>::at(const std::string& name) const {
  auto it = vars_.find(name);
  require(it != vars_.end(), "missing parameter " + name);
  return it->second;
}

template <typename T>
std::map<std::string, Tensor<T>> BoundParams<T>::grads() const {
  std::map<std::string, Tensor<T>> out;
  for (const auto& [name, v] : vars_) out.emplace(name, v.grad());
  return out;
}

template class ParamSet<float>;
template class ParamSet<double>;
template class BoundParams<float>;
template class BoundParams<double>;

namespace {
constexpr char kMagic[4] = {'C', 'D', 'W', 'T'};
constexpr std::uint16_t kVersion = 1;
}  // namespace

std::vector<std::uint8_t> encode_cdwt(const ParamSet<float>& params) {
  ByteWriter w;
  w.str(std::string(kMagic, 4));
  w.u16(kVersion);
  w.u32(static_cast<std::uint32_t>(params.size()));
  for (const auto& [name, e] : params) {
    require(name.size() <= 0xFFFF, "parameter name too long: " + name);
    w.u16(static_cast<std::uint16_t>(name.size()));
    w.str(name);
    const Shape s = e.value.shape();
    w.u8(4);
    w.u32(static_cast<std::uint32_t>(s.n));
    w.u32(static_cast<std::uint32_t>(s.c));
    w.u32(static_cast<std::uint32_t>(s.h));
    w.u32(static_cast<std::uint32_t>(s.w));
    for (float v : e.value.data()) w.f32(v);
  }
  return w.bytes();
}

ParamSet<float> decode_cdwt(std::span<const std::uint8_t> bytes) {
  ByteReader r(bytes);
  if (r.str(4) != std::string(kMagic, 4)) throw ParseError("bad CDWT magic", 0);
  const std::size_t vpos = r.offset();
  const std::uint16_t version = r.u16();
  if (version != kVersion)
    throw ParseError("unsupported CDWT version " + std::to_string(version), vpos);
  const std::uint32_t count = r.u32();
  ParamSet<float> out;
  for (std::uint32_t i = 0; i < count; ++i) {
    const std::size_t at = r.offset();
    const std::string name = r.str(r.u16());
    const std::size_t rpos = r.offset();
    const int rank = r.u8();
    if (rank < 1 || rank > 4) throw ParseError("tensor rank must be 1..4", rpos);
    std::vector<int> ext;
    for (int k = 0; k < rank; ++k) {
      const std::size_t epos = r.offset();
      const std::uint32_t e = r.u32();
      if (e == 0 || e > (1u << 30)) throw ParseError("bad extent", epos);
      ext.push_back(static_cast<int>(e));
    }
    Shape s;
    switch (rank) {
      case 1: s = {1, ext[0], 1, 1}; break;
      case 2: s = {ext[0], ext[1], 1, 1}; break;
      case 3: s = {1, ext[0], ext[1], ext[2]}; break;
      default: s = {ext[0], ext[1], ext[2], ext[3]}; break;
    }
    Tensor<float> t(s);
    for (std::size_t k = 0; k < t.size(); ++k) t[k] = r.f32();
    if (out.contains(name)) throw ParseError("duplicate tensor name " + name, at);
    out.add(name, std::move(t));
  }
  if (r.remaining() != 0) throw ParseError("trailing bytes after last tensor", r.offset());
  return out;
}

void save_cdwt(const ParamSet<float>& params, const std::filesystem::path& path) {
  write_file(path, encode_cdwt(params));
}

ParamSet<float> load_cdwt(const std::filesystem::path& path) {
  return decode_cdwt(read_file(path));
}

}  // namespace cdavsr
