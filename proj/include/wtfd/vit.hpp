// Vision Transformer encoder: patch embedding with a learned class token and
// position table, pre-LN blocks (multi-head self-attention, GeLU MLP), class
// token feature output, and attention-map extraction from the last block.

#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include "wtfd/rng.hpp"
#include "wtfd/tensor.hpp"
#include "wtfd/tfm.hpp"

namespace wtfd::vit {

struct ViTConfig {
  std::size_t patch_size = 16;
  std::size_t embed_dim = 192;
  std::size_t n_heads = 3;
  std::size_t head_dim = 64;  // d_K = d_V
  std::size_t mlp_dim = 768;
  std::size_t depth = 12;

  static ViTConfig desk();
  void validate() const;
  // Patches per image; throws ShapeError if dims are not divisible by P.
  std::size_t n_patches(std::size_t img_h, std::size_t img_w) const;
};

// Handles into a ParamSet; the set owns storage, the encoder holds layout.
template <class T>
struct Encoder {
  ViTConfig cfg;
  std::size_t img_h = 0, img_w = 0, channels = 0;
  std::size_t n = 0;  // patches per image

  ag::Parameter<T>* w_emd = nullptr;   // [P*P*C, d]
  ag::Parameter<T>* x_class = nullptr; // [1, d]
  ag::Parameter<T>* e_pos = nullptr;   // [N+1, d]
  struct Block {
    ag::Parameter<T>* ln1_g, *ln1_b;
    ag::Parameter<T>* w_q, *w_k, *w_v;  // [d, h*head_dim], head-partitioned columns
    ag::Parameter<T>* w_o;              // [h*head_dim, d]
    ag::Parameter<T>* ln2_g, *ln2_b;
    ag::Parameter<T>* w1, *b1, *w2, *b2;
  };
  std::vector<Block> blocks;
  ag::Parameter<T>* lnf_g = nullptr, *lnf_b = nullptr;

  std::size_t seq_len() const { return n + 1; }
};

// Creates and initializes all encoder parameters in `ps` under `prefix`.
// Weights are truncated normal std 0.02, biases zero, LN gains one.
template <class T>
Encoder<T> make_encoder(ag::ParamSet<T>& ps, const ViTConfig& cfg,
                        std::size_t img_h, std::size_t img_w,
                        std::size_t channels, const std::string& prefix,
                        Rng& rng);

// Row-major patch flattening of one map: N rows of P*P*C values.
std::vector<float> patch_rows(const tfm::TimeFrequencyMap& x, std::size_t p);

// Graph-building pieces. `patches` is [M, N, P*P*C]; sequences are
// [M, N+1, d]. All are differentiable through the bound parameters.
template <class T>
ag::Var<T> patch_embed(ag::Graph<T>& g, const Encoder<T>& enc,
                       ag::Var<T> patches);
template <class T>
ag::Var<T> msa(ag::Graph<T>& g, const Encoder<T>& enc, std::size_t block,
               ag::Var<T> z, std::vector<std::vector<T>>* attn_out = nullptr);
template <class T>
ag::Var<T> mlp_block(ag::Graph<T>& g, const Encoder<T>& enc, std::size_t block,
                     ag::Var<T> z);
// Full stack: patch_embed, depth blocks, final LN of the class-token row.
// Returns y [M, d]; optionally captures last-block attention per head.
template <class T>
ag::Var<T> encode_batch(ag::Graph<T>& g, const Encoder<T>& enc,
                        ag::Var<T> patches,
                        std::vector<std::vector<T>>* last_attn = nullptr);

// Inference convenience for a single map.
template <class T>
std::vector<T> encode(const Encoder<T>& enc, const tfm::TimeFrequencyMap& x);

struct AttentionMaps {
  std::size_t n_heads = 0;
  std::size_t n_patches = 0;
  std::vector<float> cam;          // [h][N], each head row sums to 1
  std::vector<std::uint8_t> tam;   // [N], 1 = retained
  std::vector<float> eam;          // [h][(N+1)*(N+1)]
};

// CAM drops the class token's self-weight and renormalizes; TAM greedily
// keeps the smallest patch set whose head-averaged CAM mass >= keep_mass.
template <class T>
AttentionMaps extract_attention(const Encoder<T>& enc,
                                const tfm::TimeFrequencyMap& x,
                                double keep_mass);

void save_attention(const std::filesystem::path& path, const AttentionMaps& m);
AttentionMaps load_attention(const std::filesystem::path& path);

}  // namespace wtfd::vit
