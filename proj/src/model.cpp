#include "pstrp/model.hpp"

#include <fmt/format.h>

#include <algorithm>
#include <cmath>
#include <numbers>

#include "pstrp/error.hpp"
#include "pstrp/simd/kernels.hpp"

namespace pstrp {

std::string_view size_preset_name(SizePreset preset) {
  switch (preset) {
    case SizePreset::kTiny:
      return "tiny";
    case SizePreset::kB:
      return "B";
    case SizePreset::kL:
      return "L";
    case SizePreset::kH:
      return "H";
  }
  return "unknown";
}

SizePreset parse_size_preset(std::string_view name) {
  if (name == "tiny") return SizePreset::kTiny;
  if (name == "B") return SizePreset::kB;
  if (name == "L") return SizePreset::kL;
  if (name == "H") return SizePreset::kH;
  throw Error(ErrorCode::kConfig, fmt::format("unknown model preset '{}'", name));
}

int StreamConfig::mlp_hidden() const {
  return static_cast<int>(std::lround(embed_dim * mlp_ratio));
}

void StreamConfig::validate() const {
  auto fail = [](const std::string& msg) { throw Error(ErrorCode::kConfig, msg); };
  if (n_tokens < 1) fail("stream config: n_tokens must be >= 1");
  if (patch_input_dim < 1) fail("stream config: patch_input_dim must be >= 1");
  if (embed_dim < 1 || depth < 0 || heads < 1) fail("stream config: invalid size");
  if (embed_dim % heads != 0) {
    fail(fmt::format("stream config: embed_dim {} not divisible by heads {}", embed_dim, heads));
  }
  if (mlp_ratio <= 0.0 || mlp_hidden() < 1) fail("stream config: mlp_ratio must be positive");
  if (!(dropout >= 0.0 && dropout < 1.0)) fail("stream config: dropout must lie in [0,1)");
}

StreamConfig preset_stream_config(SizePreset preset, int n_tokens, int patch_input_dim) {
  StreamConfig cfg;
  cfg.n_tokens = n_tokens;
  cfg.patch_input_dim = patch_input_dim;
  cfg.preset = preset;
  switch (preset) {
    case SizePreset::kTiny:
      cfg.embed_dim = 64, cfg.depth = 2, cfg.heads = 4;
      break;
    case SizePreset::kB:
      cfg.embed_dim = 768, cfg.depth = 12, cfg.heads = 12;
      break;
    case SizePreset::kL:
      cfg.embed_dim = 1024, cfg.depth = 24, cfg.heads = 16;
      break;
    case SizePreset::kH:
      cfg.embed_dim = 1280, cfg.depth = 32, cfg.heads = 16;
      break;
  }
  return cfg;
}

std::size_t parameter_count(const StreamConfig& cfg) {
  const std::size_t d = static_cast<std::size_t>(cfg.embed_dim);
  const std::size_t p = static_cast<std::size_t>(cfg.patch_input_dim);
  const std::size_t n = static_cast<std::size_t>(cfg.n_tokens);
  const std::size_t h = static_cast<std::size_t>(cfg.mlp_hidden());
  const std::size_t ph = static_cast<std::size_t>(cfg.pair_hidden());
  const std::size_t block = 2 * d + (3 * d * d + 3 * d) + (d * d + d) + 2 * d + (h * d + h) +
                            (d * h + d);
  return (p * d + d) + n * d + static_cast<std::size_t>(cfg.depth) * block + 2 * d +
         (d * n + n) + (d * ph + ph) + d * ph + (ph + 1);
}

namespace {

Tensor make_tensor(std::string name, int rows, int cols) {
  Tensor t;
  t.name = std::move(name);
  t.rows = rows;
  t.cols = cols;
  t.value.assign(static_cast<std::size_t>(rows) * cols, 0.0);
  t.grad.assign(t.value.size(), 0.0);
  return t;
}

Linear make_linear(const std::string& name, int in, int out, bool bias) {
  Linear l;
  l.weight = make_tensor(name + ".weight", out, in);
  if (bias) l.bias = make_tensor(name + ".bias", 1, out);
  return l;
}

LayerNorm make_norm(const std::string& name, int dim) {
  LayerNorm ln{make_tensor(name + ".gamma", 1, dim), make_tensor(name + ".beta", 1, dim)};
  std::fill(ln.gamma.value.begin(), ln.gamma.value.end(), 1.0);
  return ln;
}

constexpr double kInitStd = 0.02;
constexpr double kNormEps = 1e-5;

void fill_normal(Tensor& t, Rng& rng) {
  for (double& v : t.value) v = kInitStd * rng.normal();
}

template <typename Visitor>
void visit(TransformerStream& s, Visitor&& fn) {
  fn(s.embed.weight);
  fn(s.embed.bias);
  fn(s.pos);
  for (auto& b : s.blocks) {
    for (Tensor* t : {&b.norm1.gamma, &b.norm1.beta, &b.qkv.weight, &b.qkv.bias, &b.proj.weight,
                      &b.proj.bias, &b.norm2.gamma, &b.norm2.beta, &b.fc1.weight, &b.fc1.bias,
                      &b.fc2.weight, &b.fc2.bias}) {
      fn(*t);
    }
  }
  fn(s.norm.gamma);
  fn(s.norm.beta);
  fn(s.order_head.weight);
  fn(s.order_head.bias);
  fn(s.pair_left.weight);
  fn(s.pair_left.bias);
  fn(s.pair_right.weight);
  fn(s.pair_out.weight);
  fn(s.pair_out.bias);
}

// ---- layer primitives (row-major, n tokens) ----

void linear_forward(const Linear& l, const double* x, int n, double* y) {
  const int in = l.in();
  const int out = l.out();
  const auto& k = simd::active();
  const bool has_bias = !l.bias.value.empty();
  for (int t = 0; t < n; ++t) {
    const double* xt = x + static_cast<std::size_t>(t) * in;
    double* yt = y + static_cast<std::size_t>(t) * out;
    for (int o = 0; o < out; ++o) {
      yt[o] = k.dot(l.weight.value.data() + static_cast<std::size_t>(o) * in, xt,
                    static_cast<std::size_t>(in)) +
              (has_bias ? l.bias.value[static_cast<std::size_t>(o)] : 0.0);
    }
  }
}

/// dW += dy^T x, db += sum dy, dx += dy W (dx may be null).
void linear_backward(Linear& l, const double* x, const double* dy, int n, double* dx) {
  const int in = l.in();
  const int out = l.out();
  const auto& k = simd::active();
  const bool has_bias = !l.bias.value.empty();
  for (int t = 0; t < n; ++t) {
    const double* xt = x + static_cast<std::size_t>(t) * in;
    const double* gt = dy + static_cast<std::size_t>(t) * out;
    double* dxt = dx != nullptr ? dx + static_cast<std::size_t>(t) * in : nullptr;
    for (int o = 0; o < out; ++o) {
      const double g = gt[o];
      if (g == 0.0) continue;
      k.axpy(g, xt, l.weight.grad.data() + static_cast<std::size_t>(o) * in,
             static_cast<std::size_t>(in));
      if (has_bias) l.bias.grad[static_cast<std::size_t>(o)] += g;
      if (dxt != nullptr) {
        k.axpy(g, l.weight.value.data() + static_cast<std::size_t>(o) * in, dxt,
               static_cast<std::size_t>(in));
      }
    }
  }
}

void norm_forward(const LayerNorm& ln, const std::vector<double>& x, int n, int d,
                  std::vector<double>& xhat, std::vector<double>& rstd, std::vector<double>& y) {
  xhat.resize(x.size());
  rstd.resize(static_cast<std::size_t>(n));
  y.resize(x.size());
  for (int t = 0; t < n; ++t) {
    const double* xt = x.data() + static_cast<std::size_t>(t) * d;
    double mean = 0.0;
    for (int c = 0; c < d; ++c) mean += xt[c];
    mean /= d;
    double var = 0.0;
    for (int c = 0; c < d; ++c) var += (xt[c] - mean) * (xt[c] - mean);
    var /= d;
    const double r = 1.0 / std::sqrt(var + kNormEps);
    rstd[static_cast<std::size_t>(t)] = r;
    for (int c = 0; c < d; ++c) {
      const std::size_t k = static_cast<std::size_t>(t) * d + c;
      xhat[k] = (xt[c] - mean) * r;
      y[k] = ln.gamma.value[static_cast<std::size_t>(c)] * xhat[k] +
             ln.beta.value[static_cast<std::size_t>(c)];
    }
  }
}

/// Adds the input gradient into dx.
void norm_backward(LayerNorm& ln, const std::vector<double>& xhat, const std::vector<double>& rstd,
                   const std::vector<double>& dy, int n, int d, std::vector<double>& dx) {
  std::vector<double> dxhat(static_cast<std::size_t>(d));
  for (int t = 0; t < n; ++t) {
    double mean_dxhat = 0.0;
    double mean_dxhat_xhat = 0.0;
    for (int c = 0; c < d; ++c) {
      const std::size_t k = static_cast<std::size_t>(t) * d + c;
      ln.gamma.grad[static_cast<std::size_t>(c)] += dy[k] * xhat[k];
      ln.beta.grad[static_cast<std::size_t>(c)] += dy[k];
      dxhat[static_cast<std::size_t>(c)] = dy[k] * ln.gamma.value[static_cast<std::size_t>(c)];
      mean_dxhat += dxhat[static_cast<std::size_t>(c)];
      mean_dxhat_xhat += dxhat[static_cast<std::size_t>(c)] * xhat[k];
    }
    mean_dxhat /= d;
    mean_dxhat_xhat /= d;
    const double r = rstd[static_cast<std::size_t>(t)];
    for (int c = 0; c < d; ++c) {
      const std::size_t k = static_cast<std::size_t>(t) * d + c;
      dx[k] += r * (dxhat[static_cast<std::size_t>(c)] - mean_dxhat - xhat[k] * mean_dxhat_xhat);
    }
  }
}

double gelu(double u) { return 0.5 * u * (1.0 + std::erf(u * std::numbers::sqrt2 / 2.0)); }

double gelu_grad(double u) {
  const double cdf = 0.5 * (1.0 + std::erf(u * std::numbers::sqrt2 / 2.0));
  const double pdf = std::exp(-0.5 * u * u) * std::numbers::inv_sqrtpi / std::numbers::sqrt2;
  return cdf + u * pdf;
}

double sigmoid(double g) {
  return g >= 0.0 ? 1.0 / (1.0 + std::exp(-g)) : std::exp(g) / (1.0 + std::exp(g));
}

void make_dropout_mask(std::vector<double>& mask, std::size_t size, double p, Rng& rng) {
  mask.resize(size);
  const double keep = 1.0 / (1.0 - p);
  for (double& m : mask) m = rng.uniform() < p ? 0.0 : keep;
}

void attention_forward(const std::vector<double>& qkv, int n, int d, int heads,
                       std::vector<double>& attn, std::vector<double>& out) {
  const int dh = d / heads;
  const double scale = 1.0 / std::sqrt(static_cast<double>(dh));
  const auto& k = simd::active();
  attn.assign(static_cast<std::size_t>(heads) * n * n, 0.0);
  out.assign(static_cast<std::size_t>(n) * d, 0.0);
  const std::size_t stride = 3 * static_cast<std::size_t>(d);
  for (int h = 0; h < heads; ++h) {
    const std::size_t qo = static_cast<std::size_t>(h) * dh;
    const std::size_t ko = d + qo;
    const std::size_t vo = 2 * static_cast<std::size_t>(d) + qo;
    for (int i = 0; i < n; ++i) {
      double* row = attn.data() + (static_cast<std::size_t>(h) * n + i) * n;
      double mx = -INFINITY;
      for (int j = 0; j < n; ++j) {
        row[j] = scale * k.dot(qkv.data() + i * stride + qo, qkv.data() + j * stride + ko,
                               static_cast<std::size_t>(dh));
        mx = std::max(mx, row[j]);
      }
      double sum = 0.0;
      for (int j = 0; j < n; ++j) {
        row[j] = std::exp(row[j] - mx);
        sum += row[j];
      }
      for (int j = 0; j < n; ++j) {
        row[j] /= sum;
        k.axpy(row[j], qkv.data() + j * stride + vo, out.data() + static_cast<std::size_t>(i) * d + qo,
               static_cast<std::size_t>(dh));
      }
    }
  }
}

void attention_backward(const std::vector<double>& qkv, const std::vector<double>& attn,
                        const std::vector<double>& d_out, int n, int d, int heads,
                        std::vector<double>& d_qkv) {
  const int dh = d / heads;
  const double scale = 1.0 / std::sqrt(static_cast<double>(dh));
  const auto& k = simd::active();
  d_qkv.assign(static_cast<std::size_t>(n) * 3 * d, 0.0);
  const std::size_t stride = 3 * static_cast<std::size_t>(d);
  std::vector<double> d_attn(static_cast<std::size_t>(n));
  for (int h = 0; h < heads; ++h) {
    const std::size_t qo = static_cast<std::size_t>(h) * dh;
    const std::size_t ko = d + qo;
    const std::size_t vo = 2 * static_cast<std::size_t>(d) + qo;
    for (int i = 0; i < n; ++i) {
      const double* a = attn.data() + (static_cast<std::size_t>(h) * n + i) * n;
      const double* go = d_out.data() + static_cast<std::size_t>(i) * d + qo;
      double weighted = 0.0;
      for (int j = 0; j < n; ++j) {
        d_attn[static_cast<std::size_t>(j)] =
            k.dot(go, qkv.data() + j * stride + vo, static_cast<std::size_t>(dh));
        k.axpy(a[j], go, d_qkv.data() + j * stride + vo, static_cast<std::size_t>(dh));
        weighted += a[j] * d_attn[static_cast<std::size_t>(j)];
      }
      for (int j = 0; j < n; ++j) {
        const double ds = a[j] * (d_attn[static_cast<std::size_t>(j)] - weighted) * scale;
        if (ds == 0.0) continue;
        k.axpy(ds, qkv.data() + j * stride + ko, d_qkv.data() + i * stride + qo,
               static_cast<std::size_t>(dh));
        k.axpy(ds, qkv.data() + i * stride + qo, d_qkv.data() + j * stride + ko,
               static_cast<std::size_t>(dh));
      }
    }
  }
}

}  // namespace

TransformerStream::TransformerStream(const StreamConfig& config, Rng* init) : cfg(config) {
  cfg.validate();
  const int d = cfg.embed_dim;
  const int n = cfg.n_tokens;
  embed = make_linear("embed", cfg.patch_input_dim, d, true);
  pos = make_tensor("pos", n, d);
  for (int b = 0; b < cfg.depth; ++b) {
    const std::string p = fmt::format("block{}.", b);
    EncoderBlock blk;
    blk.norm1 = make_norm(p + "norm1", d);
    blk.qkv = make_linear(p + "qkv", d, 3 * d, true);
    blk.proj = make_linear(p + "proj", d, d, true);
    blk.norm2 = make_norm(p + "norm2", d);
    blk.fc1 = make_linear(p + "fc1", d, cfg.mlp_hidden(), true);
    blk.fc2 = make_linear(p + "fc2", cfg.mlp_hidden(), d, true);
    blocks.push_back(std::move(blk));
  }
  norm = make_norm("norm", d);
  order_head = make_linear("order_head", d, n, true);
  pair_left = make_linear("pair_left", d, cfg.pair_hidden(), true);
  pair_right = make_linear("pair_right", d, cfg.pair_hidden(), false);
  pair_out = make_linear("pair_out", cfg.pair_hidden(), 1, true);
  if (init != nullptr) {
    visit(*this, [&](Tensor& t) {
      const bool is_weight = t.name.ends_with(".weight") || t.name == "pos";
      if (is_weight) fill_normal(t, *init);
    });
  }
}

std::vector<Tensor*> TransformerStream::parameters() {
  std::vector<Tensor*> out;
  visit(*this, [&](Tensor& t) { out.push_back(&t); });
  return out;
}

std::vector<const Tensor*> TransformerStream::parameters() const {
  std::vector<const Tensor*> out;
  visit(const_cast<TransformerStream&>(*this), [&](Tensor& t) { out.push_back(&t); });
  return out;
}

std::size_t TransformerStream::parameter_count() const {
  std::size_t total = 0;
  for (const Tensor* t : parameters()) total += t->size();
  return total;
}

void TransformerStream::zero_grad() {
  visit(*this, [](Tensor& t) { std::fill(t.grad.begin(), t.grad.end(), 0.0); });
}

std::vector<double> embed(const TransformerStream& stream, std::span<const double> patches) {
  const auto& cfg = stream.cfg;
  const std::size_t expected =
      static_cast<std::size_t>(cfg.n_tokens) * static_cast<std::size_t>(cfg.patch_input_dim);
  if (patches.size() != expected) {
    throw Error(ErrorCode::kConfig,
                fmt::format("embed: got {} values, expected {} patches of {}", patches.size(),
                            cfg.n_tokens, cfg.patch_input_dim));
  }
  std::vector<double> tokens(static_cast<std::size_t>(cfg.n_tokens) * cfg.embed_dim);
  linear_forward(stream.embed, patches.data(), cfg.n_tokens, tokens.data());
  for (std::size_t k = 0; k < tokens.size(); ++k) tokens[k] += stream.pos.value[k];
  return tokens;
}

StreamOutput forward_tokens(const TransformerStream& stream, std::span<const double> tokens,
                            Mode mode, Rng* dropout_rng, StreamTrace* trace) {
  const auto& cfg = stream.cfg;
  const int n = cfg.n_tokens;
  const int d = cfg.embed_dim;
  const int hidden = cfg.mlp_hidden();
  const int ph = cfg.pair_hidden();
  if (tokens.size() != static_cast<std::size_t>(n) * d) {
    throw Error(ErrorCode::kShape, "forward: token matrix has the wrong shape");
  }
  const bool dropout = mode == Mode::kTrain && cfg.dropout > 0.0;
  if (dropout && dropout_rng == nullptr) {
    throw Error(ErrorCode::kConfig, "forward: train mode with dropout needs an rng");
  }
  StreamTrace local;
  StreamTrace& tr = trace != nullptr ? *trace : local;
  tr.blocks.assign(stream.blocks.size(), BlockTrace{});

  std::vector<double> x(tokens.begin(), tokens.end());
  for (std::size_t b = 0; b < stream.blocks.size(); ++b) {
    const EncoderBlock& blk = stream.blocks[b];
    BlockTrace& bt = tr.blocks[b];
    bt.x_in = x;
    norm_forward(blk.norm1, x, n, d, bt.ln1_xhat, bt.ln1_rstd, bt.ln1_out);
    bt.qkv.resize(static_cast<std::size_t>(n) * 3 * d);
    linear_forward(blk.qkv, bt.ln1_out.data(), n, bt.qkv.data());
    attention_forward(bt.qkv, n, d, cfg.heads, bt.attn, bt.attn_out);
    std::vector<double> branch(static_cast<std::size_t>(n) * d);
    linear_forward(blk.proj, bt.attn_out.data(), n, branch.data());
    if (dropout) {
      make_dropout_mask(bt.drop1, branch.size(), cfg.dropout, *dropout_rng);
      for (std::size_t k = 0; k < branch.size(); ++k) branch[k] *= bt.drop1[k];
    } else {
      bt.drop1.clear();
    }
    for (std::size_t k = 0; k < x.size(); ++k) x[k] += branch[k];
    bt.x_mid = x;
    norm_forward(blk.norm2, x, n, d, bt.ln2_xhat, bt.ln2_rstd, bt.ln2_out);
    bt.fc1_out.resize(static_cast<std::size_t>(n) * hidden);
    linear_forward(blk.fc1, bt.ln2_out.data(), n, bt.fc1_out.data());
    bt.act.resize(bt.fc1_out.size());
    for (std::size_t k = 0; k < bt.act.size(); ++k) bt.act[k] = gelu(bt.fc1_out[k]);
    linear_forward(blk.fc2, bt.act.data(), n, branch.data());
    if (dropout) {
      make_dropout_mask(bt.drop2, branch.size(), cfg.dropout, *dropout_rng);
      for (std::size_t k = 0; k < branch.size(); ++k) branch[k] *= bt.drop2[k];
    } else {
      bt.drop2.clear();
    }
    for (std::size_t k = 0; k < x.size(); ++k) x[k] += branch[k];
  }
  norm_forward(stream.norm, x, n, d, tr.lnf_xhat, tr.lnf_rstd, tr.z);

  StreamOutput out;
  out.n = n;
  out.order_logits.resize(static_cast<std::size_t>(n) * n);
  linear_forward(stream.order_head, tr.z.data(), n, out.order_logits.data());

  tr.left.resize(static_cast<std::size_t>(n) * ph);
  tr.right.resize(static_cast<std::size_t>(n) * ph);
  linear_forward(stream.pair_left, tr.z.data(), n, tr.left.data());
  linear_forward(stream.pair_right, tr.z.data(), n, tr.right.data());
  tr.sig.assign(static_cast<std::size_t>(n) * n, 0.0);
  std::vector<double> hvec(static_cast<std::size_t>(ph));
  const double* w_out = stream.pair_out.weight.value.data();
  const double b_out = stream.pair_out.bias.value[0];
  for (int i = 0; i < n; ++i) {
    for (int j = 0; j < n; ++j) {
      if (i == j) continue;
      for (int c = 0; c < ph; ++c) {
        hvec[static_cast<std::size_t>(c)] =
            gelu(tr.left[static_cast<std::size_t>(i) * ph + c] +
                 tr.right[static_cast<std::size_t>(j) * ph + c]);
      }
      const double g = simd::active().dot(w_out, hvec.data(), static_cast<std::size_t>(ph)) + b_out;
      tr.sig[static_cast<std::size_t>(i) * n + j] = sigmoid(g);
    }
  }
  out.distance_pred.assign(static_cast<std::size_t>(n) * n, 0.0);
  for (int i = 0; i < n; ++i) {
    for (int j = i + 1; j < n; ++j) {
      const double v = 0.5 * (tr.sig[static_cast<std::size_t>(i) * n + j] +
                              tr.sig[static_cast<std::size_t>(j) * n + i]);
      out.distance_pred[static_cast<std::size_t>(i) * n + j] = v;
      out.distance_pred[static_cast<std::size_t>(j) * n + i] = v;
    }
  }
  return out;
}

StreamOutput forward(const TransformerStream& stream, const PatchSet& patches, Mode mode,
                     Rng* dropout_rng, StreamTrace* trace) {
  if (patches.n != stream.cfg.n_tokens ||
      patches.patch_dim() != static_cast<std::size_t>(stream.cfg.patch_input_dim)) {
    throw Error(ErrorCode::kConfig,
                fmt::format("{} stream expects {} patches of {} values, got {} of {}",
                            stream_name(patches.stream), stream.cfg.n_tokens,
                            stream.cfg.patch_input_dim, patches.n, patches.patch_dim()));
  }
  const auto tokens = embed(stream, patches.data);
  if (trace != nullptr) trace->patches = patches.data;
  return forward_tokens(stream, tokens, mode, dropout_rng, trace);
}

void backward(TransformerStream& stream, const StreamTrace& tr, std::span<const double> d_logits,
              std::span<const double> d_distance) {
  const auto& cfg = stream.cfg;
  const int n = cfg.n_tokens;
  const int d = cfg.embed_dim;
  const int ph = cfg.pair_hidden();
  const std::size_t nn = static_cast<std::size_t>(n) * n;
  if (d_logits.size() != nn || d_distance.size() != nn) {
    throw Error(ErrorCode::kShape, "backward: gradient matrices have the wrong shape");
  }
  if (tr.patches.size() != static_cast<std::size_t>(n) * cfg.patch_input_dim) {
    throw Error(ErrorCode::kShape, "backward: trace was not recorded from a patch forward pass");
  }
  const auto& k = simd::active();

  std::vector<double> dz(static_cast<std::size_t>(n) * d, 0.0);
  linear_backward(stream.order_head, tr.z.data(), d_logits.data(), n, dz.data());

  // Pair head.
  std::vector<double> d_left(static_cast<std::size_t>(n) * ph, 0.0);
  std::vector<double> d_right(static_cast<std::size_t>(n) * ph, 0.0);
  std::vector<double> u(static_cast<std::size_t>(ph));
  std::vector<double> hvec(static_cast<std::size_t>(ph));
  double* dw_out = stream.pair_out.weight.grad.data();
  const double* w_out = stream.pair_out.weight.value.data();
  for (int i = 0; i < n; ++i) {
    for (int j = 0; j < n; ++j) {
      if (i == j) continue;
      const std::size_t ij = static_cast<std::size_t>(i) * n + j;
      const std::size_t ji = static_cast<std::size_t>(j) * n + i;
      const double ds = 0.5 * (d_distance[ij] + d_distance[ji]);
      const double s = tr.sig[ij];
      const double dg = ds * s * (1.0 - s);
      if (dg == 0.0) continue;
      for (int c = 0; c < ph; ++c) {
        u[static_cast<std::size_t>(c)] = tr.left[static_cast<std::size_t>(i) * ph + c] +
                                         tr.right[static_cast<std::size_t>(j) * ph + c];
        hvec[static_cast<std::size_t>(c)] = gelu(u[static_cast<std::size_t>(c)]);
      }
      k.axpy(dg, hvec.data(), dw_out, static_cast<std::size_t>(ph));
      stream.pair_out.bias.grad[0] += dg;
      for (int c = 0; c < ph; ++c) {
        const double du = dg * w_out[c] * gelu_grad(u[static_cast<std::size_t>(c)]);
        d_left[static_cast<std::size_t>(i) * ph + c] += du;
        d_right[static_cast<std::size_t>(j) * ph + c] += du;
      }
    }
  }
  linear_backward(stream.pair_left, tr.z.data(), d_left.data(), n, dz.data());
  linear_backward(stream.pair_right, tr.z.data(), d_right.data(), n, dz.data());

  std::vector<double> dx(static_cast<std::size_t>(n) * d, 0.0);
  norm_backward(stream.norm, tr.lnf_xhat, tr.lnf_rstd, dz, n, d, dx);

  const int hidden = cfg.mlp_hidden();
  for (std::size_t b = stream.blocks.size(); b-- > 0;) {
    EncoderBlock& blk = stream.blocks[b];
    const BlockTrace& bt = tr.blocks[b];
    // MLP branch.
    std::vector<double> d_branch = dx;
    if (!bt.drop2.empty()) {
      for (std::size_t q = 0; q < d_branch.size(); ++q) d_branch[q] *= bt.drop2[q];
    }
    std::vector<double> d_act(static_cast<std::size_t>(n) * hidden, 0.0);
    linear_backward(blk.fc2, bt.act.data(), d_branch.data(), n, d_act.data());
    for (std::size_t q = 0; q < d_act.size(); ++q) d_act[q] *= gelu_grad(bt.fc1_out[q]);
    std::vector<double> d_ln2(static_cast<std::size_t>(n) * d, 0.0);
    linear_backward(blk.fc1, bt.ln2_out.data(), d_act.data(), n, d_ln2.data());
    norm_backward(blk.norm2, bt.ln2_xhat, bt.ln2_rstd, d_ln2, n, d, dx);  // dx is now d x_mid
    // Attention branch.
    d_branch = dx;
    if (!bt.drop1.empty()) {
      for (std::size_t q = 0; q < d_branch.size(); ++q) d_branch[q] *= bt.drop1[q];
    }
    std::vector<double> d_attn_out(static_cast<std::size_t>(n) * d, 0.0);
    linear_backward(blk.proj, bt.attn_out.data(), d_branch.data(), n, d_attn_out.data());
    std::vector<double> d_qkv;
    attention_backward(bt.qkv, bt.attn, d_attn_out, n, d, cfg.heads, d_qkv);
    std::vector<double> d_ln1(static_cast<std::size_t>(n) * d, 0.0);
    linear_backward(blk.qkv, bt.ln1_out.data(), d_qkv.data(), n, d_ln1.data());
    norm_backward(blk.norm1, bt.ln1_xhat, bt.ln1_rstd, d_ln1, n, d, dx);  // dx is now d x_in
  }

  for (std::size_t q = 0; q < dx.size(); ++q) stream.pos.grad[q] += dx[q];
  linear_backward(stream.embed, tr.patches.data(), dx.data(), n, nullptr);
}

std::vector<Tensor*> TwoStreamModel::parameters() {
  auto out = spatial.parameters();
  const auto t = temporal.parameters();
  out.insert(out.end(), t.begin(), t.end());
  return out;
}

std::vector<const Tensor*> TwoStreamModel::parameters() const {
  auto out = spatial.parameters();
  const auto t = temporal.parameters();
  out.insert(out.end(), t.begin(), t.end());
  return out;
}

void TwoStreamModel::zero_grad() {
  spatial.zero_grad();
  temporal.zero_grad();
}

TwoStreamModel build_two_stream(const StreamConfig& spatial, const StreamConfig& temporal,
                                std::uint64_t seed) {
  Rng spatial_rng(mix_seed(seed, 0x5a));
  Rng temporal_rng(mix_seed(seed, 0x7e));
  return TwoStreamModel{TransformerStream(spatial, &spatial_rng),
                        TransformerStream(temporal, &temporal_rng)};
}

TwoStreamOutput forward(const TwoStreamModel& model, const PatchSet& spatial,
                        const PatchSet& temporal, Mode mode) {
  if (spatial.stream != Stream::kSpatial || temporal.stream != Stream::kTemporal) {
    throw Error(ErrorCode::kShape, "two-stream forward: patch sets passed in the wrong order");
  }
  return {forward(model.spatial, spatial, mode), forward(model.temporal, temporal, mode)};
}

}  // namespace pstrp
