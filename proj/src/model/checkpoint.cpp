// SPDX-License-Identifier: Apache-2.0

#include "carft/model/checkpoint.hpp"

#include <bit>
#include <cstring>
#include <fstream>
#include <iterator>
#include <vector>

#include "carft/common/error.hpp"

namespace carft::model {

namespace {

constexpr std::size_t kMagicLen = sizeof(kCheckpointMagic) - 1;

class Writer {
 public:
  void u32(std::uint32_t v) { put(v, 4); }
  void u64(std::uint64_t v) { put(v, 8); }
  void f64(double v) { put(std::bit_cast<std::uint64_t>(v), 8); }
  void bytes(const char* p, std::size_t n) { buf_.insert(buf_.end(), p, p + n); }
  const std::vector<char>& buffer() const { return buf_; }

 private:
  void put(std::uint64_t v, int n) {
    for (int i = 0; i < n; ++i) buf_.push_back(static_cast<char>((v >> (8 * i)) & 0xff));
  }
  std::vector<char> buf_;
};

class Reader {
 public:
  Reader(std::vector<char> buf, std::string path) : buf_(std::move(buf)), path_(std::move(path)) {}
  std::uint32_t u32() { return static_cast<std::uint32_t>(get(4)); }
  std::uint64_t u64() { return get(8); }
  double f64() { return std::bit_cast<double>(get(8)); }
  std::string bytes(std::size_t n) {
    need(n);
    std::string s(buf_.data() + pos_, n);
    pos_ += n;
    return s;
  }
  bool at_end() const { return pos_ == buf_.size(); }
  [[noreturn]] void fail(const std::string& what) const {
    throw Error("model", path_ + ": " + what);
  }

 private:
  void need(std::size_t n) const {
    if (buf_.size() - pos_ < n) fail("truncated checkpoint");
  }
  std::uint64_t get(int n) {
    need(static_cast<std::size_t>(n));
    std::uint64_t v = 0;
    for (int i = 0; i < n; ++i) {
      v |= static_cast<std::uint64_t>(static_cast<unsigned char>(buf_[pos_ + i])) << (8 * i);
    }
    pos_ += static_cast<std::size_t>(n);
    return v;
  }
  std::vector<char> buf_;
  std::string path_;
  std::size_t pos_ = 0;
};

std::vector<std::size_t*> config_fields(ModelConfig& c) {
  return {&c.vocab_size, &c.d_model, &c.n_layers, &c.n_heads, &c.d_ff, &c.max_seq_len, &c.d_proj};
}

}  // namespace

void save_checkpoint(const std::string& path, const PolicyParams& params) {
  Writer w;
  w.bytes(kCheckpointMagic, kMagicLen);
  w.u32(kCheckpointVersion);
  ModelConfig cfg = params.config;
  for (std::size_t* f : config_fields(cfg)) w.u64(static_cast<std::uint64_t>(*f));
  std::uint32_t count = 0;
  visit_params(params.weights, [&](const std::string&, const ad::Array&) { ++count; });
  w.u32(count);
  visit_params(params.weights, [&](const std::string& name, const ad::Array& a) {
    w.u32(static_cast<std::uint32_t>(name.size()));
    w.bytes(name.data(), name.size());
    w.u32(static_cast<std::uint32_t>(a.rank()));
    for (std::size_t e : a.shape()) w.u64(e);
    for (double v : a.data()) w.f64(v);
  });
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw Error("model", "cannot open checkpoint for writing: " + path);
  out.write(w.buffer().data(), static_cast<std::streamsize>(w.buffer().size()));
  if (!out) throw Error("model", "failed writing checkpoint: " + path);
}

PolicyParams load_checkpoint(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error("model", "cannot open checkpoint: " + path);
  std::vector<char> buf((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
  Reader r(std::move(buf), path);
  if (r.bytes(kMagicLen) != std::string(kCheckpointMagic, kMagicLen)) r.fail("bad magic");
  const std::uint32_t version = r.u32();
  if (version != kCheckpointVersion) {
    r.fail("unsupported checkpoint version " + std::to_string(version));
  }
  PolicyParams p;
  for (std::size_t* f : config_fields(p.config)) *f = static_cast<std::size_t>(r.u64());
  p.config.validate();
  p.weights.layers.resize(p.config.n_layers);
  // Expected names and shapes come from a freshly shaped parameter set.
  const PolicyParams shaped = init_params(p.config, 0);
  std::vector<std::pair<std::string, const ad::Array*>> expected;
  visit_params(shaped.weights, [&](const std::string& name, const ad::Array& a) {
    expected.emplace_back(name, &a);
  });
  const std::uint32_t count = r.u32();
  if (count != expected.size()) r.fail("unexpected array count " + std::to_string(count));
  std::vector<ad::Array*> slots = param_list(p.weights);
  for (std::size_t i = 0; i < expected.size(); ++i) {
    const std::string name = r.bytes(r.u32());
    if (name != expected[i].first) r.fail("unexpected array '" + name + "'");
    ad::Shape shape(r.u32());
    for (std::size_t& e : shape) e = static_cast<std::size_t>(r.u64());
    if (shape != expected[i].second->shape()) {
      r.fail("array '" + name + "' has shape " + ad::shape_string(shape) + ", expected " +
             ad::shape_string(expected[i].second->shape()));
    }
    std::vector<double> data(ad::shape_size(shape));
    for (double& v : data) v = r.f64();
    try {
      *slots[i] = ad::Array(std::move(shape), std::move(data));
    } catch (const Error& e) {
      r.fail("array '" + name + "': " + e.message());
    }
  }
  if (!r.at_end()) r.fail("trailing bytes after last array");
  return p;
}

}  // namespace carft::model
