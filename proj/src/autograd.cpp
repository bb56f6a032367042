#include "stylecast/autograd.hpp"

#include <cmath>
#include <stdexcept>

namespace stylecast {

int Graph::push(Tensor val, bool needs_grad, std::function<void(Graph&)> back) {
  Node n;
  n.val = std::move(val);
  n.needs_grad = needs_grad;
  n.back = std::move(back);
  nodes_.push_back(std::move(n));
  return static_cast<int>(nodes_.size()) - 1;
}

Tensor& Graph::grad_buf(int id) {
  Node& n = nodes_[id];
  if (!n.grad_alloc) {
    n.grad = Tensor(n.val.rows, n.val.cols);
    n.grad_alloc = true;
  }
  return n.grad;
}

void Graph::accumulate(int id, const Tensor& g) {
  Tensor& dst = grad_buf(id);
  for (size_t i = 0; i < dst.data.size(); ++i) dst.data[i] += g.data[i];
}

void Graph::check_same_shape(Var a, Var b, const char* op) const {
  if (a.rows != b.rows || a.cols != b.cols) {
    throw std::invalid_argument(std::string(op) + ": shape mismatch " +
                                nodes_[a.id].val.shape_str() + " vs " +
                                nodes_[b.id].val.shape_str());
  }
}

Var Graph::input(Tensor t) {
  const int r = t.rows, c = t.cols;
  const int id = push(std::move(t), false, nullptr);
  return {id, r, c};
}

Var Graph::leaf(Tensor t) {
  const int r = t.rows, c = t.cols;
  const int id = push(std::move(t), true, nullptr);
  return {id, r, c};
}

Var Graph::param(ParamTensor& p) {
  auto it = param_nodes_.find(&p);
  if (it != param_nodes_.end()) {
    const Node& n = nodes_[it->second];
    return {it->second, n.val.rows, n.val.cols};
  }
  const int r = p.value.rows, c = p.value.cols;
  const int id = push(p.value, p.trainable, nullptr);
  nodes_[id].param = &p;
  param_nodes_.emplace(&p, id);
  return {id, r, c};
}

Var Graph::zero_scalar() { return input(Tensor(1, 1)); }

Var Graph::matmul(Var a, Var b) {
  if (a.cols != b.rows) throw std::invalid_argument("matmul: inner dims differ");
  const Tensor& A = nodes_[a.id].val;
  const Tensor& B = nodes_[b.id].val;
  Tensor out(a.rows, b.cols);
  for (int i = 0; i < a.rows; ++i) {
    for (int j = 0; j < b.cols; ++j) {
      double acc = 0.0;
      for (int k = 0; k < a.cols; ++k) acc += static_cast<double>(A.at(i, k)) * B.at(k, j);
      out.at(i, j) = static_cast<float>(acc);
    }
  }
  const bool ng = nodes_[a.id].needs_grad || nodes_[b.id].needs_grad;
  const int id = push(std::move(out), ng, nullptr);
  nodes_[id].back = [a, b, id](Graph& g) {
    const Tensor& go = g.grad_buf(id);
    const Tensor& A = g.nodes_[a.id].val;
    const Tensor& B = g.nodes_[b.id].val;
    if (g.nodes_[a.id].needs_grad) {
      Tensor& ga = g.grad_buf(a.id);
      for (int i = 0; i < A.rows; ++i) {
        for (int k = 0; k < A.cols; ++k) {
          double acc = 0.0;
          for (int j = 0; j < B.cols; ++j) acc += static_cast<double>(go.at(i, j)) * B.at(k, j);
          ga.at(i, k) += static_cast<float>(acc);
        }
      }
    }
    if (g.nodes_[b.id].needs_grad) {
      Tensor& gb = g.grad_buf(b.id);
      for (int k = 0; k < B.rows; ++k) {
        for (int j = 0; j < B.cols; ++j) {
          double acc = 0.0;
          for (int i = 0; i < A.rows; ++i) acc += static_cast<double>(A.at(i, k)) * go.at(i, j);
          gb.at(k, j) += static_cast<float>(acc);
        }
      }
    }
  };
  return {id, a.rows, b.cols};
}

Var Graph::add(Var a, Var b) {
  check_same_shape(a, b, "add");
  Tensor out = nodes_[a.id].val;
  const Tensor& B = nodes_[b.id].val;
  for (size_t i = 0; i < out.data.size(); ++i) out.data[i] += B.data[i];
  const bool ng = nodes_[a.id].needs_grad || nodes_[b.id].needs_grad;
  const int id = push(std::move(out), ng, nullptr);
  nodes_[id].back = [a, b, id](Graph& g) {
    const Tensor& go = g.grad_buf(id);
    if (g.nodes_[a.id].needs_grad) g.accumulate(a.id, go);
    if (g.nodes_[b.id].needs_grad) g.accumulate(b.id, go);
  };
  return {id, a.rows, a.cols};
}

Var Graph::sub(Var a, Var b) {
  check_same_shape(a, b, "sub");
  Tensor out = nodes_[a.id].val;
  const Tensor& B = nodes_[b.id].val;
  for (size_t i = 0; i < out.data.size(); ++i) out.data[i] -= B.data[i];
  const bool ng = nodes_[a.id].needs_grad || nodes_[b.id].needs_grad;
  const int id = push(std::move(out), ng, nullptr);
  nodes_[id].back = [a, b, id](Graph& g) {
    const Tensor& go = g.grad_buf(id);
    if (g.nodes_[a.id].needs_grad) g.accumulate(a.id, go);
    if (g.nodes_[b.id].needs_grad) {
      Tensor& gb = g.grad_buf(b.id);
      for (size_t i = 0; i < gb.data.size(); ++i) gb.data[i] -= go.data[i];
    }
  };
  return {id, a.rows, a.cols};
}

Var Graph::mul(Var a, Var b) {
  check_same_shape(a, b, "mul");
  Tensor out = nodes_[a.id].val;
  const Tensor& B = nodes_[b.id].val;
  for (size_t i = 0; i < out.data.size(); ++i) out.data[i] *= B.data[i];
  const bool ng = nodes_[a.id].needs_grad || nodes_[b.id].needs_grad;
  const int id = push(std::move(out), ng, nullptr);
  nodes_[id].back = [a, b, id](Graph& g) {
    const Tensor& go = g.grad_buf(id);
    const Tensor& A = g.nodes_[a.id].val;
    const Tensor& B2 = g.nodes_[b.id].val;
    if (g.nodes_[a.id].needs_grad) {
      Tensor& ga = g.grad_buf(a.id);
      for (size_t i = 0; i < ga.data.size(); ++i) ga.data[i] += go.data[i] * B2.data[i];
    }
    if (g.nodes_[b.id].needs_grad) {
      Tensor& gb = g.grad_buf(b.id);
      for (size_t i = 0; i < gb.data.size(); ++i) gb.data[i] += go.data[i] * A.data[i];
    }
  };
  return {id, a.rows, a.cols};
}

Var Graph::add_rowvec(Var a, Var bias) {
  if (bias.rows != 1 || bias.cols != a.cols) {
    throw std::invalid_argument("add_rowvec: bias must be [1 x cols]");
  }
  Tensor out = nodes_[a.id].val;
  const Tensor& B = nodes_[bias.id].val;
  for (int i = 0; i < out.rows; ++i) {
    for (int j = 0; j < out.cols; ++j) out.at(i, j) += B.at(0, j);
  }
  const bool ng = nodes_[a.id].needs_grad || nodes_[bias.id].needs_grad;
  const int id = push(std::move(out), ng, nullptr);
  nodes_[id].back = [a, bias, id](Graph& g) {
    const Tensor& go = g.grad_buf(id);
    if (g.nodes_[a.id].needs_grad) g.accumulate(a.id, go);
    if (g.nodes_[bias.id].needs_grad) {
      Tensor& gb = g.grad_buf(bias.id);
      for (int j = 0; j < go.cols; ++j) {
        double acc = 0.0;
        for (int i = 0; i < go.rows; ++i) acc += go.at(i, j);
        gb.at(0, j) += static_cast<float>(acc);
      }
    }
  };
  return {id, a.rows, a.cols};
}

Var Graph::scale(Var a, float c) {
  Tensor out = nodes_[a.id].val;
  for (auto& x : out.data) x *= c;
  const bool ng = nodes_[a.id].needs_grad;
  const int id = push(std::move(out), ng, nullptr);
  nodes_[id].back = [a, c, id](Graph& g) {
    if (!g.nodes_[a.id].needs_grad) return;
    const Tensor& go = g.grad_buf(id);
    Tensor& ga = g.grad_buf(a.id);
    for (size_t i = 0; i < ga.data.size(); ++i) ga.data[i] += c * go.data[i];
  };
  return {id, a.rows, a.cols};
}

Var Graph::affine(Var x, Var w, Var bias) { return add_rowvec(matmul(x, w), bias); }

Var Graph::affine2(Var x, Var wx, Var h, Var wh, Var bias) {
  return add(affine(x, wx, bias), matmul(h, wh));
}

Var Graph::tanh_(Var a) {
  Tensor out = nodes_[a.id].val;
  for (auto& x : out.data) x = std::tanh(x);
  const bool ng = nodes_[a.id].needs_grad;
  const int id = push(std::move(out), ng, nullptr);
  nodes_[id].back = [a, id](Graph& g) {
    if (!g.nodes_[a.id].needs_grad) return;
    const Tensor& go = g.grad_buf(id);
    const Tensor& y = g.nodes_[id].val;
    Tensor& ga = g.grad_buf(a.id);
    for (size_t i = 0; i < ga.data.size(); ++i) {
      ga.data[i] += go.data[i] * (1.0f - y.data[i] * y.data[i]);
    }
  };
  return {id, a.rows, a.cols};
}

Var Graph::sigmoid_(Var a) {
  Tensor out = nodes_[a.id].val;
  for (auto& x : out.data) x = 1.0f / (1.0f + std::exp(-x));
  const bool ng = nodes_[a.id].needs_grad;
  const int id = push(std::move(out), ng, nullptr);
  nodes_[id].back = [a, id](Graph& g) {
    if (!g.nodes_[a.id].needs_grad) return;
    const Tensor& go = g.grad_buf(id);
    const Tensor& y = g.nodes_[id].val;
    Tensor& ga = g.grad_buf(a.id);
    for (size_t i = 0; i < ga.data.size(); ++i) {
      ga.data[i] += go.data[i] * y.data[i] * (1.0f - y.data[i]);
    }
  };
  return {id, a.rows, a.cols};
}

Var Graph::hardswish_(Var a) {
  Tensor out = nodes_[a.id].val;
  for (auto& x : out.data) x = hardswish(x);
  const bool ng = nodes_[a.id].needs_grad;
  const int id = push(std::move(out), ng, nullptr);
  nodes_[id].back = [a, id](Graph& g) {
    if (!g.nodes_[a.id].needs_grad) return;
    const Tensor& go = g.grad_buf(id);
    const Tensor& x = g.nodes_[a.id].val;
    Tensor& ga = g.grad_buf(a.id);
    for (size_t i = 0; i < ga.data.size(); ++i) {
      ga.data[i] += go.data[i] * hardswish_grad(x.data[i]);
    }
  };
  return {id, a.rows, a.cols};
}

Var Graph::grl(Var a, float lambda) {
  if (lambda < 0.0f) throw std::invalid_argument("grl: lambda must be >= 0");
  Tensor out = nodes_[a.id].val;  // identity forward, bit-exact
  const bool ng = nodes_[a.id].needs_grad;
  const int id = push(std::move(out), ng, nullptr);
  nodes_[id].back = [a, lambda, id](Graph& g) {
    if (!g.nodes_[a.id].needs_grad) return;
    const Tensor& go = g.grad_buf(id);
    Tensor& ga = g.grad_buf(a.id);
    for (size_t i = 0; i < ga.data.size(); ++i) ga.data[i] += -lambda * go.data[i];
  };
  return {id, a.rows, a.cols};
}

Var Graph::concat_cols(const std::vector<Var>& xs) {
  if (xs.empty()) throw std::invalid_argument("concat_cols: empty list");
  const int rows = xs[0].rows;
  int cols = 0;
  for (const Var& v : xs) {
    if (v.rows != rows) throw std::invalid_argument("concat_cols: row mismatch");
    cols += v.cols;
  }
  Tensor out(rows, cols);
  int off = 0;
  bool ng = false;
  for (const Var& v : xs) {
    const Tensor& t = nodes_[v.id].val;
    for (int i = 0; i < rows; ++i) {
      for (int j = 0; j < v.cols; ++j) out.at(i, off + j) = t.at(i, j);
    }
    off += v.cols;
    ng = ng || nodes_[v.id].needs_grad;
  }
  const int id = push(std::move(out), ng, nullptr);
  std::vector<Var> parents = xs;
  nodes_[id].back = [parents, id](Graph& g) {
    const Tensor& go = g.grad_buf(id);
    int off2 = 0;
    for (const Var& v : parents) {
      if (g.nodes_[v.id].needs_grad) {
        Tensor& gv = g.grad_buf(v.id);
        for (int i = 0; i < v.rows; ++i) {
          for (int j = 0; j < v.cols; ++j) gv.at(i, j) += go.at(i, off2 + j);
        }
      }
      off2 += v.cols;
    }
  };
  return {id, rows, cols};
}

Var Graph::concat_rows(const std::vector<Var>& xs) {
  if (xs.empty()) throw std::invalid_argument("concat_rows: empty list");
  const int cols = xs[0].cols;
  int rows = 0;
  for (const Var& v : xs) {
    if (v.cols != cols) throw std::invalid_argument("concat_rows: col mismatch");
    rows += v.rows;
  }
  Tensor out(rows, cols);
  int off = 0;
  bool ng = false;
  for (const Var& v : xs) {
    const Tensor& t = nodes_[v.id].val;
    for (int i = 0; i < v.rows; ++i) {
      for (int j = 0; j < cols; ++j) out.at(off + i, j) = t.at(i, j);
    }
    off += v.rows;
    ng = ng || nodes_[v.id].needs_grad;
  }
  const int id = push(std::move(out), ng, nullptr);
  std::vector<Var> parents = xs;
  nodes_[id].back = [parents, id](Graph& g) {
    const Tensor& go = g.grad_buf(id);
    int off2 = 0;
    for (const Var& v : parents) {
      if (g.nodes_[v.id].needs_grad) {
        Tensor& gv = g.grad_buf(v.id);
        for (int i = 0; i < v.rows; ++i) {
          for (int j = 0; j < v.cols; ++j) gv.at(i, j) += go.at(off2 + i, j);
        }
      }
      off2 += v.rows;
    }
  };
  return {id, rows, cols};
}

Var Graph::slice_rows(Var a, int r0, int r1) {
  if (r0 < 0 || r1 > a.rows || r0 >= r1) throw std::invalid_argument("slice_rows: bad range");
  const Tensor& A = nodes_[a.id].val;
  Tensor out(r1 - r0, a.cols);
  for (int i = r0; i < r1; ++i) {
    for (int j = 0; j < a.cols; ++j) out.at(i - r0, j) = A.at(i, j);
  }
  const bool ng = nodes_[a.id].needs_grad;
  const int id = push(std::move(out), ng, nullptr);
  nodes_[id].back = [a, r0, id](Graph& g) {
    if (!g.nodes_[a.id].needs_grad) return;
    const Tensor& go = g.grad_buf(id);
    Tensor& ga = g.grad_buf(a.id);
    for (int i = 0; i < go.rows; ++i) {
      for (int j = 0; j < go.cols; ++j) ga.at(r0 + i, j) += go.at(i, j);
    }
  };
  return {id, r1 - r0, a.cols};
}

Var Graph::mean_rows(Var a) {
  const Tensor& A = nodes_[a.id].val;
  Tensor out(1, a.cols);
  for (int j = 0; j < a.cols; ++j) {
    double acc = 0.0;
    for (int i = 0; i < a.rows; ++i) acc += A.at(i, j);
    out.at(0, j) = static_cast<float>(acc / a.rows);
  }
  const bool ng = nodes_[a.id].needs_grad;
  const int id = push(std::move(out), ng, nullptr);
  const float inv = 1.0f / static_cast<float>(a.rows);
  nodes_[id].back = [a, inv, id](Graph& g) {
    if (!g.nodes_[a.id].needs_grad) return;
    const Tensor& go = g.grad_buf(id);
    Tensor& ga = g.grad_buf(a.id);
    for (int i = 0; i < ga.rows; ++i) {
      for (int j = 0; j < ga.cols; ++j) ga.at(i, j) += inv * go.at(0, j);
    }
  };
  return {id, 1, a.cols};
}

Var Graph::shift_rows(Var a, int offset) {
  const Tensor& A = nodes_[a.id].val;
  Tensor out(a.rows, a.cols);
  for (int i = 0; i < a.rows; ++i) {
    const int src = i + offset;
    if (src < 0 || src >= a.rows) continue;
    for (int j = 0; j < a.cols; ++j) out.at(i, j) = A.at(src, j);
  }
  const bool ng = nodes_[a.id].needs_grad;
  const int id = push(std::move(out), ng, nullptr);
  nodes_[id].back = [a, offset, id](Graph& g) {
    if (!g.nodes_[a.id].needs_grad) return;
    const Tensor& go = g.grad_buf(id);
    Tensor& ga = g.grad_buf(a.id);
    for (int i = 0; i < go.rows; ++i) {
      const int src = i + offset;
      if (src < 0 || src >= ga.rows) continue;
      for (int j = 0; j < go.cols; ++j) ga.at(src, j) += go.at(i, j);
    }
  };
  return {id, a.rows, a.cols};
}

Var Graph::repeat_row(Var a, int n) {
  if (a.rows != 1) throw std::invalid_argument("repeat_row: expects [1 x c]");
  if (n < 1) throw std::invalid_argument("repeat_row: n must be >= 1");
  const Tensor& A = nodes_[a.id].val;
  Tensor out(n, a.cols);
  for (int i = 0; i < n; ++i) {
    for (int j = 0; j < a.cols; ++j) out.at(i, j) = A.at(0, j);
  }
  const bool ng = nodes_[a.id].needs_grad;
  const int id = push(std::move(out), ng, nullptr);
  nodes_[id].back = [a, id](Graph& g) {
    if (!g.nodes_[a.id].needs_grad) return;
    const Tensor& go = g.grad_buf(id);
    Tensor& ga = g.grad_buf(a.id);
    for (int j = 0; j < go.cols; ++j) {
      double acc = 0.0;
      for (int i = 0; i < go.rows; ++i) acc += go.at(i, j);
      ga.at(0, j) += static_cast<float>(acc);
    }
  };
  return {id, n, a.cols};
}

Var Graph::segment_mean_rows(Var a, const std::vector<int>& durations) {
  int total = 0;
  for (int d : durations) {
    if (d < 1) throw std::invalid_argument("segment_mean_rows: durations must be >= 1");
    total += d;
  }
  if (total != a.rows) {
    throw std::invalid_argument("segment_mean_rows: durations sum " + std::to_string(total) +
                                " != rows " + std::to_string(a.rows));
  }
  const Tensor& A = nodes_[a.id].val;
  const int P = static_cast<int>(durations.size());
  Tensor out(P, a.cols);
  int r = 0;
  for (int p = 0; p < P; ++p) {
    for (int j = 0; j < a.cols; ++j) {
      double acc = 0.0;
      for (int k = 0; k < durations[p]; ++k) acc += A.at(r + k, j);
      out.at(p, j) = static_cast<float>(acc / durations[p]);
    }
    r += durations[p];
  }
  const bool ng = nodes_[a.id].needs_grad;
  const int id = push(std::move(out), ng, nullptr);
  nodes_[id].back = [a, durations, id](Graph& g) {
    if (!g.nodes_[a.id].needs_grad) return;
    const Tensor& go = g.grad_buf(id);
    Tensor& ga = g.grad_buf(a.id);
    int r2 = 0;
    for (size_t p = 0; p < durations.size(); ++p) {
      const float inv = 1.0f / static_cast<float>(durations[p]);
      for (int k = 0; k < durations[p]; ++k) {
        for (int j = 0; j < go.cols; ++j) {
          ga.at(r2 + k, j) += inv * go.at(static_cast<int>(p), j);
        }
      }
      r2 += durations[p];
    }
  };
  return {id, P, a.cols};
}

Var Graph::length_regulate(Var a, const std::vector<int>& durations) {
  if (static_cast<int>(durations.size()) != a.rows) {
    throw std::invalid_argument("length_regulate: need one duration per row");
  }
  int total = 0;
  for (int d : durations) {
    if (d < 1) throw std::invalid_argument("length_regulate: durations must be >= 1");
    total += d;
  }
  const Tensor& A = nodes_[a.id].val;
  Tensor out(total, a.cols);
  int r = 0;
  for (int p = 0; p < a.rows; ++p) {
    for (int k = 0; k < durations[p]; ++k) {
      for (int j = 0; j < a.cols; ++j) out.at(r + k, j) = A.at(p, j);
    }
    r += durations[p];
  }
  const bool ng = nodes_[a.id].needs_grad;
  const int id = push(std::move(out), ng, nullptr);
  nodes_[id].back = [a, durations, id](Graph& g) {
    if (!g.nodes_[a.id].needs_grad) return;
    const Tensor& go = g.grad_buf(id);
    Tensor& ga = g.grad_buf(a.id);
    int r2 = 0;
    for (int p = 0; p < ga.rows; ++p) {
      for (int j = 0; j < ga.cols; ++j) {
        double acc = 0.0;
        for (int k = 0; k < durations[p]; ++k) acc += go.at(r2 + k, j);
        ga.at(p, j) += static_cast<float>(acc);
      }
      r2 += durations[p];
    }
  };
  return {id, total, a.cols};
}

Var Graph::rows_gather(Var table, const std::vector<int>& ids) {
  const Tensor& T = nodes_[table.id].val;
  for (int i : ids) {
    if (i < 0 || i >= table.rows) {
      throw std::out_of_range("rows_gather: id " + std::to_string(i) + " outside table");
    }
  }
  Tensor out(static_cast<int>(ids.size()), table.cols);
  for (size_t r = 0; r < ids.size(); ++r) {
    for (int j = 0; j < table.cols; ++j) out.at(static_cast<int>(r), j) = T.at(ids[r], j);
  }
  const bool ng = nodes_[table.id].needs_grad;
  const int id = push(std::move(out), ng, nullptr);
  nodes_[id].back = [table, ids, id](Graph& g) {
    if (!g.nodes_[table.id].needs_grad) return;
    const Tensor& go = g.grad_buf(id);
    Tensor& gt = g.grad_buf(table.id);
    for (size_t r = 0; r < ids.size(); ++r) {
      for (int j = 0; j < go.cols; ++j) gt.at(ids[r], j) += go.at(static_cast<int>(r), j);
    }
  };
  return {id, static_cast<int>(ids.size()), table.cols};
}

Var Graph::gru_seq(Var x, const GruVars& p) {
  const int T = x.rows;
  const int I = x.cols;
  const int H = p.w_ir.cols;
  auto check = [&](Var v, int r, int c, const char* what) {
    if (v.rows != r || v.cols != c) {
      throw std::invalid_argument(std::string("gru_seq: ") + what + " has shape " +
                                  nodes_[v.id].val.shape_str() + ", expected [" +
                                  std::to_string(r) + "x" + std::to_string(c) + "]");
    }
  };
  check(p.w_ir, I, H, "w_ir");
  check(p.w_iz, I, H, "w_iz");
  check(p.w_in, I, H, "w_in");
  check(p.w_hr, H, H, "w_hr");
  check(p.w_hz, H, H, "w_hz");
  check(p.w_hn, H, H, "w_hn");
  for (Var b : {p.b_ir, p.b_iz, p.b_in, p.b_hr, p.b_hz, p.b_hn}) check(b, 1, H, "bias");

  const Tensor& X = nodes_[x.id].val;
  const Tensor& Wir = nodes_[p.w_ir.id].val;
  const Tensor& Wiz = nodes_[p.w_iz.id].val;
  const Tensor& Win = nodes_[p.w_in.id].val;
  const Tensor& Whr = nodes_[p.w_hr.id].val;
  const Tensor& Whz = nodes_[p.w_hz.id].val;
  const Tensor& Whn = nodes_[p.w_hn.id].val;
  const Tensor& bir = nodes_[p.b_ir.id].val;
  const Tensor& biz = nodes_[p.b_iz.id].val;
  const Tensor& bin = nodes_[p.b_in.id].val;
  const Tensor& bhr = nodes_[p.b_hr.id].val;
  const Tensor& bhz = nodes_[p.b_hz.id].val;
  const Tensor& bhn = nodes_[p.b_hn.id].val;

  // Saved activations for backward.
  Tensor Hs(T, H), R(T, H), Z(T, H), N(T, H), U(T, H);
  std::vector<float> h(H, 0.0f);
  for (int t = 0; t < T; ++t) {
    for (int j = 0; j < H; ++j) {
      double ar = bir.at(0, j) + bhr.at(0, j);
      double az = biz.at(0, j) + bhz.at(0, j);
      double an_x = bin.at(0, j);
      double u = bhn.at(0, j);
      for (int k = 0; k < I; ++k) {
        const double xv = X.at(t, k);
        ar += xv * Wir.at(k, j);
        az += xv * Wiz.at(k, j);
        an_x += xv * Win.at(k, j);
      }
      for (int k = 0; k < H; ++k) {
        const double hv = h[k];
        ar += hv * Whr.at(k, j);
        az += hv * Whz.at(k, j);
        u += hv * Whn.at(k, j);
      }
      const double r = 1.0 / (1.0 + std::exp(-ar));
      const double z = 1.0 / (1.0 + std::exp(-az));
      const double n = std::tanh(an_x + r * u);
      R.at(t, j) = static_cast<float>(r);
      Z.at(t, j) = static_cast<float>(z);
      N.at(t, j) = static_cast<float>(n);
      U.at(t, j) = static_cast<float>(u);
      Hs.at(t, j) = static_cast<float>((1.0 - z) * n + z * h[j]);
    }
    for (int j = 0; j < H; ++j) h[j] = Hs.at(t, j);
  }

  bool ng = nodes_[x.id].needs_grad;
  for (Var v : {p.w_ir, p.w_iz, p.w_in, p.w_hr, p.w_hz, p.w_hn, p.b_ir, p.b_iz, p.b_in, p.b_hr,
                p.b_hz, p.b_hn}) {
    ng = ng || nodes_[v.id].needs_grad;
  }
  const int id = push(std::move(Hs), ng, nullptr);
  GruVars ps = p;
  nodes_[id].back = [x, ps, R, Z, N, U, T, I, H, id](Graph& g) {
    const Tensor& go = g.grad_buf(id);
    const Tensor& Hs2 = g.nodes_[id].val;
    const Tensor& X2 = g.nodes_[x.id].val;
    const Tensor& Wir = g.nodes_[ps.w_ir.id].val;
    const Tensor& Wiz = g.nodes_[ps.w_iz.id].val;
    const Tensor& Win = g.nodes_[ps.w_in.id].val;
    const Tensor& Whr = g.nodes_[ps.w_hr.id].val;
    const Tensor& Whz = g.nodes_[ps.w_hz.id].val;
    const Tensor& Whn = g.nodes_[ps.w_hn.id].val;

    const bool need_x = g.nodes_[x.id].needs_grad;
    auto need = [&](Var v) { return g.nodes_[v.id].needs_grad; };

    std::vector<double> dh(H, 0.0);      // running dL/dh_t from future steps
    std::vector<double> dar(H), daz(H), dan(H), dun(H);
    std::vector<float> hprev(H);

    for (int t = T - 1; t >= 0; --t) {
      for (int j = 0; j < H; ++j) hprev[j] = t > 0 ? Hs2.at(t - 1, j) : 0.0f;
      std::vector<double> dh_prev(H, 0.0);
      for (int j = 0; j < H; ++j) {
        const double gh = dh[j] + go.at(t, j);
        const double r = R.at(t, j), z = Z.at(t, j), n = N.at(t, j), u = U.at(t, j);
        const double dn = gh * (1.0 - z);
        const double dz = gh * (hprev[j] - n);
        dh_prev[j] += gh * z;
        const double da_n = dn * (1.0 - n * n);
        const double dr = da_n * u;
        const double du = da_n * r;
        dan[j] = da_n;
        dun[j] = du;
        dar[j] = dr * r * (1.0 - r);
        daz[j] = dz * z * (1.0 - z);
        // du flows through u = h.Whn + bhn
        if (need(ps.b_hn)) g.grad_buf(ps.b_hn.id).at(0, j) += static_cast<float>(du);
        if (need(ps.w_hn)) {
          Tensor& gw = g.grad_buf(ps.w_hn.id);
          for (int k = 0; k < H; ++k) gw.at(k, j) += static_cast<float>(hprev[k] * du);
        }
      }
      // dh_prev accumulations through Whr/Whz/Whn recurrent paths.
      for (int k = 0; k < H; ++k) {
        double acc = dh_prev[k];
        for (int j = 0; j < H; ++j) {
          acc += dar[j] * Whr.at(k, j) + daz[j] * Whz.at(k, j) + dun[j] * Whn.at(k, j);
        }
        dh_prev[k] = acc;
      }
      for (int j = 0; j < H; ++j) {
        if (need(ps.b_ir)) g.grad_buf(ps.b_ir.id).at(0, j) += static_cast<float>(dar[j]);
        if (need(ps.b_hr)) g.grad_buf(ps.b_hr.id).at(0, j) += static_cast<float>(dar[j]);
        if (need(ps.b_iz)) g.grad_buf(ps.b_iz.id).at(0, j) += static_cast<float>(daz[j]);
        if (need(ps.b_hz)) g.grad_buf(ps.b_hz.id).at(0, j) += static_cast<float>(daz[j]);
        if (need(ps.b_in)) g.grad_buf(ps.b_in.id).at(0, j) += static_cast<float>(dan[j]);
      }
      if (need(ps.w_hr)) {
        Tensor& gw = g.grad_buf(ps.w_hr.id);
        for (int k = 0; k < H; ++k) {
          for (int j = 0; j < H; ++j) gw.at(k, j) += static_cast<float>(hprev[k] * dar[j]);
        }
      }
      if (need(ps.w_hz)) {
        Tensor& gw = g.grad_buf(ps.w_hz.id);
        for (int k = 0; k < H; ++k) {
          for (int j = 0; j < H; ++j) gw.at(k, j) += static_cast<float>(hprev[k] * daz[j]);
        }
      }
      if (need(ps.w_ir) || need(ps.w_iz) || need(ps.w_in) || need_x) {
        for (int k = 0; k < I; ++k) {
          const double xv = X2.at(t, k);
          if (need(ps.w_ir)) {
            Tensor& gw = g.grad_buf(ps.w_ir.id);
            for (int j = 0; j < H; ++j) gw.at(k, j) += static_cast<float>(xv * dar[j]);
          }
          if (need(ps.w_iz)) {
            Tensor& gw = g.grad_buf(ps.w_iz.id);
            for (int j = 0; j < H; ++j) gw.at(k, j) += static_cast<float>(xv * daz[j]);
          }
          if (need(ps.w_in)) {
            Tensor& gw = g.grad_buf(ps.w_in.id);
            for (int j = 0; j < H; ++j) gw.at(k, j) += static_cast<float>(xv * dan[j]);
          }
          if (need_x) {
            double acc = 0.0;
            for (int j = 0; j < H; ++j) {
              acc += dar[j] * Wir.at(k, j) + daz[j] * Wiz.at(k, j) + dan[j] * Win.at(k, j);
            }
            g.grad_buf(x.id).at(t, k) += static_cast<float>(acc);
          }
        }
      }
      dh = dh_prev;
    }
  };
  return {id, T, H};
}

Var Graph::softmax_ce(Var logits, const std::vector<int>& labels) {
  if (static_cast<int>(labels.size()) != logits.rows) {
    throw std::invalid_argument("softmax_ce: one label per logits row required");
  }
  for (int y : labels) {
    if (y < 0 || y >= logits.cols) throw std::out_of_range("softmax_ce: label outside logit set");
  }
  const Tensor& L = nodes_[logits.id].val;
  double total = 0.0;
  for (int i = 0; i < logits.rows; ++i) {
    double mx = L.at(i, 0);
    for (int j = 1; j < logits.cols; ++j) mx = std::max(mx, static_cast<double>(L.at(i, j)));
    double se = 0.0;
    for (int j = 0; j < logits.cols; ++j) se += std::exp(static_cast<double>(L.at(i, j)) - mx);
    total += (mx + std::log(se)) - static_cast<double>(L.at(i, labels[i]));
  }
  Tensor out(1, 1);
  out.at(0, 0) = static_cast<float>(total / logits.rows);
  const bool ng = nodes_[logits.id].needs_grad;
  const int id = push(std::move(out), ng, nullptr);
  nodes_[id].back = [logits, labels, id](Graph& g) {
    if (!g.nodes_[logits.id].needs_grad) return;
    const float go = g.grad_buf(id).at(0, 0);
    const Tensor& L2 = g.nodes_[logits.id].val;
    Tensor& gl = g.grad_buf(logits.id);
    const float inv_n = 1.0f / static_cast<float>(L2.rows);
    for (int i = 0; i < L2.rows; ++i) {
      double mx = L2.at(i, 0);
      for (int j = 1; j < L2.cols; ++j) mx = std::max(mx, static_cast<double>(L2.at(i, j)));
      double se = 0.0;
      for (int j = 0; j < L2.cols; ++j) se += std::exp(static_cast<double>(L2.at(i, j)) - mx);
      for (int j = 0; j < L2.cols; ++j) {
        const double p = std::exp(static_cast<double>(L2.at(i, j)) - mx) / se;
        const double delta = (j == labels[i]) ? 1.0 : 0.0;
        gl.at(i, j) += go * inv_n * static_cast<float>(p - delta);
      }
    }
  };
  return {id, 1, 1};
}

Var Graph::mae(Var pred, const Tensor& target) {
  const Tensor& P = nodes_[pred.id].val;
  if (!P.same_shape(target)) throw std::invalid_argument("mae: shape mismatch");
  double total = 0.0;
  for (size_t i = 0; i < P.data.size(); ++i) {
    total += std::abs(static_cast<double>(P.data[i]) - target.data[i]);
  }
  Tensor out(1, 1);
  out.at(0, 0) = static_cast<float>(total / P.data.size());
  const bool ng = nodes_[pred.id].needs_grad;
  const int id = push(std::move(out), ng, nullptr);
  Tensor tgt = target;
  nodes_[id].back = [pred, tgt, id](Graph& g) {
    if (!g.nodes_[pred.id].needs_grad) return;
    const float go = g.grad_buf(id).at(0, 0);
    const Tensor& P2 = g.nodes_[pred.id].val;
    Tensor& gp = g.grad_buf(pred.id);
    const float inv = 1.0f / static_cast<float>(P2.data.size());
    for (size_t i = 0; i < P2.data.size(); ++i) {
      const float d = P2.data[i] - tgt.data[i];
      const float s = d > 0.0f ? 1.0f : (d < 0.0f ? -1.0f : 0.0f);
      gp.data[i] += go * inv * s;
    }
  };
  return {id, 1, 1};
}

Var Graph::mse(Var pred, const Tensor& target) {
  const Tensor& P = nodes_[pred.id].val;
  if (!P.same_shape(target)) throw std::invalid_argument("mse: shape mismatch");
  double total = 0.0;
  for (size_t i = 0; i < P.data.size(); ++i) {
    const double d = static_cast<double>(P.data[i]) - target.data[i];
    total += d * d;
  }
  Tensor out(1, 1);
  out.at(0, 0) = static_cast<float>(total / P.data.size());
  const bool ng = nodes_[pred.id].needs_grad;
  const int id = push(std::move(out), ng, nullptr);
  Tensor tgt = target;
  nodes_[id].back = [pred, tgt, id](Graph& g) {
    if (!g.nodes_[pred.id].needs_grad) return;
    const float go = g.grad_buf(id).at(0, 0);
    const Tensor& P2 = g.nodes_[pred.id].val;
    Tensor& gp = g.grad_buf(pred.id);
    const float inv = 2.0f / static_cast<float>(P2.data.size());
    for (size_t i = 0; i < P2.data.size(); ++i) {
      gp.data[i] += go * inv * (P2.data[i] - tgt.data[i]);
    }
  };
  return {id, 1, 1};
}

Var Graph::weighted_sum(const std::vector<Var>& scalars, const std::vector<float>& weights) {
  if (scalars.size() != weights.size() || scalars.empty()) {
    throw std::invalid_argument("weighted_sum: size mismatch or empty");
  }
  double acc = 0.0;
  bool ng = false;
  for (size_t i = 0; i < scalars.size(); ++i) {
    const Var v = scalars[i];
    if (v.rows != 1 || v.cols != 1) throw std::invalid_argument("weighted_sum: non-scalar input");
    acc += static_cast<double>(weights[i]) * nodes_[v.id].val.at(0, 0);
    ng = ng || nodes_[v.id].needs_grad;
  }
  Tensor out(1, 1);
  out.at(0, 0) = static_cast<float>(acc);
  const int id = push(std::move(out), ng, nullptr);
  std::vector<Var> parents = scalars;
  std::vector<float> ws = weights;
  nodes_[id].back = [parents, ws, id](Graph& g) {
    const float go = g.grad_buf(id).at(0, 0);
    for (size_t i = 0; i < parents.size(); ++i) {
      if (!g.nodes_[parents[i].id].needs_grad) continue;
      g.grad_buf(parents[i].id).at(0, 0) += go * ws[i];
    }
  };
  return {id, 1, 1};
}

void Graph::backward(Var loss) {
  if (loss.rows != 1 || loss.cols != 1) {
    throw std::invalid_argument("backward: loss must be scalar");
  }
  grad_buf(loss.id).at(0, 0) = 1.0f;
  for (int i = loss.id; i >= 0; --i) {
    Node& n = nodes_[i];
    if (!n.needs_grad || !n.back || !n.grad_alloc) continue;
    n.back(*this);
  }
  // Fold param-node grads back into their stores.
  for (const auto& [p, id] : param_nodes_) {
    Node& n = nodes_[id];
    if (!n.needs_grad || !n.grad_alloc) continue;
    ParamTensor* pt = n.param;
    for (size_t i = 0; i < pt->grad.data.size(); ++i) pt->grad.data[i] += n.grad.data[i];
  }
}

float Graph::scalar(Var v) const {
  const Tensor& t = nodes_[v.id].val;
  if (t.rows != 1 || t.cols != 1) throw std::invalid_argument("scalar: not a 1x1 tensor");
  return t.at(0, 0);
}

const Tensor& Graph::grad(Var v) {
  return grad_buf(v.id);  // zero if no gradient reached this node
}

}  // namespace stylecast
