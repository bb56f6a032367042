#pragma once

#include <map>
#include <memory>
#include <stdexcept>
#include <string>
#include <vector>

#include "stylecast/rng.hpp"
#include "stylecast/tensor.hpp"

namespace stylecast {

// A named trainable tensor plus its persistent gradient and Adam state.
struct ParamTensor {
  std::string name;
  Tensor value;
  Tensor grad;
  bool trainable = true;

  Tensor adam_m;
  Tensor adam_v;

  ParamTensor(std::string n, int rows, int cols)
      : name(std::move(n)), value(rows, cols), grad(rows, cols) {}
};

// Ordered, pointer-stable collection of parameters. Iteration order is the
// lexicographic name order, which keeps optimizer sweeps and checkpoint
// layout deterministic.
class ParamStore {
 public:
  ParamTensor& create(const std::string& name, int rows, int cols) {
    if (params_.count(name)) throw std::logic_error("param already exists: " + name);
    auto p = std::make_unique<ParamTensor>(name, rows, cols);
    ParamTensor& ref = *p;
    params_.emplace(name, std::move(p));
    return ref;
  }

  ParamTensor& get(const std::string& name) {
    auto it = params_.find(name);
    if (it == params_.end()) throw std::out_of_range("no such param: " + name);
    return *it->second;
  }

  const ParamTensor& get(const std::string& name) const {
    auto it = params_.find(name);
    if (it == params_.end()) throw std::out_of_range("no such param: " + name);
    return *it->second;
  }

  bool contains(const std::string& name) const { return params_.count(name) > 0; }

  void remove_prefix(const std::string& prefix) {
    for (auto it = params_.begin(); it != params_.end();) {
      if (it->first.rfind(prefix, 0) == 0) {
        it = params_.erase(it);
      } else {
        ++it;
      }
    }
  }

  void set_trainable_prefix(const std::string& prefix, bool trainable) {
    for (auto& [name, p] : params_) {
      if (name.rfind(prefix, 0) == 0) p->trainable = trainable;
    }
  }

  std::vector<ParamTensor*> all() {
    std::vector<ParamTensor*> out;
    out.reserve(params_.size());
    for (auto& [name, p] : params_) out.push_back(p.get());
    return out;
  }

  std::vector<const ParamTensor*> all() const {
    std::vector<const ParamTensor*> out;
    out.reserve(params_.size());
    for (auto& [name, p] : params_) out.push_back(p.get());
    return out;
  }

  std::vector<ParamTensor*> with_prefix(const std::string& prefix) {
    std::vector<ParamTensor*> out;
    for (auto& [name, p] : params_) {
      if (name.rfind(prefix, 0) == 0) out.push_back(p.get());
    }
    return out;
  }

  void zero_grads() {
    for (auto& [name, p] : params_) p->grad.fill(0.0f);
  }

  size_t size() const { return params_.size(); }

 private:
  std::map<std::string, std::unique_ptr<ParamTensor>> params_;
};

// Xavier-uniform init. The RNG stream is forked per parameter name so the
// initial value depends only on (seed, name), never on creation order.
inline void init_xavier(ParamTensor& p, const Rng& base) {
  Rng r = base.fork(p.name);
  const double a = std::sqrt(6.0 / (p.value.rows + p.value.cols));
  for (auto& x : p.value.data) x = static_cast<float>(r.uniform(-a, a));
}

inline void init_uniform(ParamTensor& p, const Rng& base, double lo, double hi) {
  Rng r = base.fork(p.name);
  for (auto& x : p.value.data) x = static_cast<float>(r.uniform(lo, hi));
}

inline void init_zero(ParamTensor& p) { p.value.fill(0.0f); }

// Adam with cosine-decayed learning rate. Grad clipping happens on the
// global norm of all trainable parameters before the update.
class AdamOptimizer {
 public:
  struct Options {
    double lr = 1e-3;
    double beta1 = 0.9;
    double beta2 = 0.999;
    double eps = 1e-8;
    double grad_clip = 5.0;  // <= 0 disables
    int total_steps = 1;     // cosine horizon
  };

  explicit AdamOptimizer(Options opt) : opt_(opt) {}

  double lr_at(int step) const {
    const double t = std::min(1.0, static_cast<double>(step) / std::max(1, opt_.total_steps));
    return opt_.lr * 0.5 * (1.0 + std::cos(M_PI * t));
  }

  // Returns the pre-clip global grad norm over trainable params.
  double step(ParamStore& store) {
    double sq = 0.0;
    for (ParamTensor* p : store.all()) {
      if (!p->trainable) continue;
      for (float g : p->grad.data) sq += static_cast<double>(g) * g;
    }
    const double norm = std::sqrt(sq);
    double clip_scale = 1.0;
    if (opt_.grad_clip > 0.0 && norm > opt_.grad_clip) clip_scale = opt_.grad_clip / norm;

    ++t_;
    const double lr = lr_at(t_ - 1);
    const double bc1 = 1.0 - std::pow(opt_.beta1, t_);
    const double bc2 = 1.0 - std::pow(opt_.beta2, t_);

    for (ParamTensor* p : store.all()) {
      if (!p->trainable) continue;
      if (p->adam_m.size() != p->value.size()) {
        p->adam_m = Tensor(p->value.rows, p->value.cols);
        p->adam_v = Tensor(p->value.rows, p->value.cols);
      }
      for (size_t i = 0; i < p->value.size(); ++i) {
        const double g = static_cast<double>(p->grad.data[i]) * clip_scale;
        double m = opt_.beta1 * p->adam_m.data[i] + (1.0 - opt_.beta1) * g;
        double v = opt_.beta2 * p->adam_v.data[i] + (1.0 - opt_.beta2) * g * g;
        p->adam_m.data[i] = static_cast<float>(m);
        p->adam_v.data[i] = static_cast<float>(v);
        const double mhat = m / bc1;
        const double vhat = v / bc2;
        p->value.data[i] -= static_cast<float>(lr * mhat / (std::sqrt(vhat) + opt_.eps));
      }
    }
    return norm;
  }

  int steps_taken() const { return t_; }

 private:
  Options opt_;
  int t_ = 0;
};

}  // namespace stylecast
