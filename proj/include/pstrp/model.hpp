#pragma once

#include <cstdint>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "pstrp/patching.hpp"
#include "pstrp/random.hpp"

namespace pstrp {

enum class SizePreset { kTiny, kB, kL, kH };

std::string_view size_preset_name(SizePreset preset);
SizePreset parse_size_preset(std::string_view name);

struct StreamConfig {
  int n_tokens = 0;
  int patch_input_dim = 0;
  int embed_dim = 64;
  int depth = 2;
  int heads = 4;
  double mlp_ratio = 4.0;
  double dropout = 0.1;
  SizePreset preset = SizePreset::kTiny;

  int head_dim() const { return embed_dim / heads; }
  int mlp_hidden() const;
  int pair_hidden() const { return embed_dim; }
  void validate() const;
  bool operator==(const StreamConfig&) const = default;
};

/// Width/depth/heads of a named preset: tiny (64, 2, 4), B (768, 12, 12),
/// L (1024, 24, 16), H (1280, 32, 16).
StreamConfig preset_stream_config(SizePreset preset, int n_tokens, int patch_input_dim);

/// Number of scalars a stream with this config holds.
std::size_t parameter_count(const StreamConfig& cfg);

struct Tensor {
  std::string name;
  int rows = 0;
  int cols = 0;
  std::vector<double> value;
  std::vector<double> grad;

  std::size_t size() const { return value.size(); }
};

/// y = W x + b with W stored rows = out, cols = in. `bias` may be empty.
struct Linear {
  Tensor weight;
  Tensor bias;

  int in() const { return weight.cols; }
  int out() const { return weight.rows; }
};

struct LayerNorm {
  Tensor gamma;
  Tensor beta;
};

struct EncoderBlock {
  LayerNorm norm1;
  Linear qkv;
  Linear proj;
  LayerNorm norm2;
  Linear fc1;
  Linear fc2;
};

/// One stream: patch embedding + learned slot embedding, pre-norm encoder,
/// per-token order head and a symmetric pairwise distance head.
struct TransformerStream {
  StreamConfig cfg;
  Linear embed;
  Tensor pos;
  std::vector<EncoderBlock> blocks;
  LayerNorm norm;
  Linear order_head;
  Linear pair_left;   // with bias
  Linear pair_right;  // no bias
  Linear pair_out;    // hidden -> 1

  /// Allocates parameters. With an Rng, weights ~ N(0, 0.02^2), biases 0,
  /// norms (1, 0); without one everything stays zero.
  TransformerStream(const StreamConfig& config, Rng* init);

  std::vector<Tensor*> parameters();
  std::vector<const Tensor*> parameters() const;
  std::size_t parameter_count() const;
  void zero_grad();
};

enum class Mode { kTrain, kEval };

struct StreamOutput {
  int n = 0;
  std::vector<double> order_logits;   // n x n, row = slot, pre-softmax
  std::vector<double> distance_pred;  // n x n, symmetric, zero diagonal, in (0,1) off-diagonal
};

struct BlockTrace {
  std::vector<double> x_in;
  std::vector<double> ln1_xhat, ln1_rstd, ln1_out;
  std::vector<double> qkv;
  std::vector<double> attn;  // heads x n x n probabilities
  std::vector<double> attn_out;
  std::vector<double> drop1;
  std::vector<double> x_mid;
  std::vector<double> ln2_xhat, ln2_rstd, ln2_out;
  std::vector<double> fc1_out;
  std::vector<double> act;
  std::vector<double> drop2;
};

/// Activations kept by a forward pass for the matching backward pass.
struct StreamTrace {
  std::vector<double> patches;
  std::vector<BlockTrace> blocks;
  std::vector<double> lnf_xhat, lnf_rstd, z;
  std::vector<double> left, right;
  std::vector<double> sig;  // n x n sigmoid of the ordered-pair head
};

/// Flattened patches (n x patch_input_dim) -> tokens (n x embed_dim), with the
/// slot embedding added.
std::vector<double> embed(const TransformerStream& stream, std::span<const double> patches);

/// Encoder + heads on already-embedded tokens. `dropout_rng` is required in
/// train mode when cfg.dropout > 0; `trace` may be null.
StreamOutput forward_tokens(const TransformerStream& stream, std::span<const double> tokens,
                            Mode mode, Rng* dropout_rng, StreamTrace* trace);

StreamOutput forward(const TransformerStream& stream, const PatchSet& patches, Mode mode,
                     Rng* dropout_rng = nullptr, StreamTrace* trace = nullptr);

/// Accumulates d(loss)/d(params) into every Tensor::grad given the loss
/// gradient w.r.t. the order logits and the (slot-order) distance matrix.
void backward(TransformerStream& stream, const StreamTrace& trace,
              std::span<const double> d_logits, std::span<const double> d_distance);

/// Two independent streams (no shared weights).
struct TwoStreamModel {
  TransformerStream spatial;
  TransformerStream temporal;

  std::vector<Tensor*> parameters();
  std::vector<const Tensor*> parameters() const;
  void zero_grad();
};

TwoStreamModel build_two_stream(const StreamConfig& spatial, const StreamConfig& temporal,
                                std::uint64_t seed);

struct TwoStreamOutput {
  StreamOutput spatial;
  StreamOutput temporal;
};

TwoStreamOutput forward(const TwoStreamModel& model, const PatchSet& spatial,
                        const PatchSet& temporal, Mode mode = Mode::kEval);

}  // namespace pstrp
