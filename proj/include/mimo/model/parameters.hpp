#pragma once

#include <cmath>
#include <map>
#include <string>
#include <utility>
#include <vector>

#include "mimo/model/config.hpp"
#include "mimo/numerics/tensor.hpp"

namespace mimo {

/// Named learnable tensors. Iteration is in lexicographic name order, which
/// is also the checkpoint manifest order.
class Parameters {
 public:
  void add(const std::string& name, Tensor t) {
    if (!map_.emplace(name, std::move(t)).second) throw ShapeError("Parameters: duplicate path " + name);
  }

  const Tensor& at(const std::string& name) const {
    auto it = map_.find(name);
    if (it == map_.end()) throw ShapeError("Parameters: missing path " + name);
    return it->second;
  }
  Tensor& at(const std::string& name) { return const_cast<Tensor&>(std::as_const(*this).at(name)); }
  bool contains(const std::string& name) const { return map_.count(name) != 0; }

  std::size_t size() const { return map_.size(); }
  std::size_t scalar_count() const {
    std::size_t total = 0;
    for (const auto& [_, t] : map_) total += t.numel();
    return total;
  }

  auto begin() const { return map_.begin(); }
  auto end() const { return map_.end(); }
  auto begin() { return map_.begin(); }
  auto end() { return map_.end(); }

  void zero_grad() {
    for (auto& [_, t] : map_) t.zero_grad();
  }
  void set_requires_grad(bool on) {
    for (auto& [_, t] : map_) t.set_requires_grad(on);
  }

  // Deep copy: fresh storage, same requires_grad flags.
  Parameters clone() const {
    Parameters out;
    for (const auto& [name, t] : map_) {
      Tensor c = t.clone();
      c.set_requires_grad(t.requires_grad());
      out.add(name, std::move(c));
    }
    return out;
  }

 private:
  std::map<std::string, Tensor> map_;
};

enum class ParamKind { weight, bias, gain, offset, embedding };

struct ParamSpec {
  std::string name;
  Shape shape;
  ParamKind kind;
  std::size_t fan_in = 0, fan_out = 0;
};

namespace detail {

inline void conv_spec(std::vector<ParamSpec>& out, const std::string& prefix, std::size_t cout, std::size_t cin,
                      Shape kernel) {
  const std::size_t kvol = shape_numel(kernel);
  Shape w{cout, cin};
  w.insert(w.end(), kernel.begin(), kernel.end());
  out.push_back({prefix + ".weight", w, ParamKind::weight, cin * kvol, cout * kvol});
  out.push_back({prefix + ".bias", {cout}, ParamKind::bias});
}

inline void norm_spec(std::vector<ParamSpec>& out, const std::string& prefix, const Shape& normalized) {
  out.push_back({prefix + ".gain", normalized, ParamKind::gain});
  out.push_back({prefix + ".offset", normalized, ParamKind::offset});
}

inline void attention_spec(std::vector<ParamSpec>& out, const std::string& prefix, std::size_t C) {
  for (const char* proj : {"q", "k", "v", "o"}) conv_spec(out, prefix + "." + proj, C, C, {1, 1});
}

inline void ffn_spec(std::vector<ParamSpec>& out, const std::string& prefix, const ModelConfig& c) {
  const std::size_t C = c.channels;
  const Shape frame{C, c.grid_h(), c.grid_w()};
  if (c.use_lsb) {
    conv_spec(out, prefix + ".conv1", C, C, {3, 3, 3});
    norm_spec(out, prefix + ".norm1", frame);
    conv_spec(out, prefix + ".conv2", C, C, {3, 3, 3});
    norm_spec(out, prefix + ".norm2", frame);
  } else {
    conv_spec(out, prefix + ".fc1", C, C, {1, 1});
    conv_spec(out, prefix + ".fc2", C, C, {1, 1});
  }
}

}  // namespace detail

/// Every learnable tensor the configuration implies, with shapes. A pure
/// function of the config.
inline std::vector<ParamSpec> parameter_specs(const ModelConfig& c) {
  c.validate();
  using namespace detail;
  std::vector<ParamSpec> s;
  const std::size_t C = c.channels;
  const Shape frame{C, c.grid_h(), c.grid_w()};
  conv_spec(s, "stem.conv1", C, c.patch_channels(), {3, 3});
  conv_spec(s, "stem.conv2", C, C, {3, 3});
  s.push_back({"embed.weight", {c.m + c.n, C}, ParamKind::embedding, c.m + c.n, C});
  for (std::size_t i = 0; i < c.enc_blocks; ++i) {
    const std::string p = "enc." + std::to_string(i);
    if (c.use_2dmha) {
      attention_spec(s, p + ".attn", C);
      norm_spec(s, p + ".attn_norm", frame);
    }
    ffn_spec(s, p + ".ffn", c);
    norm_spec(s, p + ".ffn_norm", frame);
  }
  for (std::size_t i = 0; i < c.dec_blocks; ++i) {
    const std::string p = "dec." + std::to_string(i);
    if (c.use_2dmha) {
      if (c.use_decoder_self_attn) {
        attention_spec(s, p + ".self_attn", C);
        norm_spec(s, p + ".self_norm", frame);
      }
      attention_spec(s, p + ".cross_attn", C);
      norm_spec(s, p + ".cross_norm", frame);
    }
    ffn_spec(s, p + ".ffn", c);
    norm_spec(s, p + ".ffn_norm", frame);
  }
  conv_spec(s, "head.conv", c.patch_channels(), C, {3, 3});
  return s;
}

inline std::size_t parameter_count(const ModelConfig& c) {
  std::size_t total = 0;
  for (const auto& spec : parameter_specs(c)) total += shape_numel(spec.shape);
  return total;
}

/// Glorot-uniform weights and embeddings, zero biases, unit gains, zero offsets.
inline Parameters init_parameters(const ModelConfig& c, Rng& rng) {
  Parameters p;
  for (const auto& spec : parameter_specs(c)) {
    Tensor t;
    switch (spec.kind) {
      case ParamKind::weight:
      case ParamKind::embedding: {
        const double bound = std::sqrt(6.0 / static_cast<double>(spec.fan_in + spec.fan_out));
        t = Tensor::build(spec.shape, fill::Uniform{-bound, bound}, &rng);
        break;
      }
      case ParamKind::bias:
      case ParamKind::offset: t = Tensor::build(spec.shape, fill::Zeros{}); break;
      case ParamKind::gain: t = Tensor::build(spec.shape, fill::Ones{}); break;
    }
    t.set_requires_grad(true);
    p.add(spec.name, std::move(t));
  }
  return p;
}

// Throws unless `p` holds exactly the tensors `c` implies.
inline void check_parameters(const Parameters& p, const ModelConfig& c) {
  const auto specs = parameter_specs(c);
  if (specs.size() != p.size())
    throw ShapeError("parameters: expected " + std::to_string(specs.size()) + " tensors, found " +
                     std::to_string(p.size()));
  for (const auto& spec : specs) {
    const Tensor& t = p.at(spec.name);
    if (t.shape() != spec.shape)
      throw ShapeError("parameters: " + spec.name + " has shape " + shape_str(t.shape()) + ", config implies " +
                       shape_str(spec.shape));
  }
}

}  // namespace mimo
