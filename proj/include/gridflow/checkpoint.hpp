#pragma once

#include <cstdint>
#include <cstring>
#include <filesystem>
#include <stdexcept>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "gridflow/dataset.hpp"
#include "gridflow/gnn.hpp"
#include "gridflow/io.hpp"

namespace gridflow {

// Checkpoint layout:
//   8 bytes  magic "GFCKPT01"
//   8 bytes  u64 little-endian header length
//   header   JSON (config, normalization stats, batch-norm running stats,
//            tensor shapes in trainable order)
//   blob     f64 little-endian weight data, trainable order
inline constexpr char kCheckpointMagic[8] = {'G', 'F', 'C', 'K', 'P', 'T', '0', '1'};

struct Checkpoint {
  ModelParams params;
  NormStats stats;
};

namespace detail {

static_assert(sizeof(double) == 8, "checkpoint format needs 64-bit doubles");

inline void put_u64_le(std::string& out, std::uint64_t v) {
  for (int i = 0; i < 8; ++i) out.push_back(static_cast<char>((v >> (8 * i)) & 0xff));
}

inline std::uint64_t get_u64_le(const std::string& s, std::size_t off) {
  std::uint64_t v = 0;
  for (int i = 0; i < 8; ++i)
    v |= static_cast<std::uint64_t>(static_cast<unsigned char>(s[off + i])) << (8 * i);
  return v;
}

inline void put_f64_le(std::string& out, double d) {
  std::uint64_t bits;
  std::memcpy(&bits, &d, 8);
  put_u64_le(out, bits);
}

inline double get_f64_le(const std::string& s, std::size_t off) {
  const std::uint64_t bits = get_u64_le(s, off);
  double d;
  std::memcpy(&d, &bits, 8);
  return d;
}

}  // namespace detail

inline std::string serialize_checkpoint(const Checkpoint& ck) {
  using nlohmann::json;
  ModelParams& p = const_cast<ModelParams&>(ck.params);
  const GnnConfig& cfg = p.cfg;

  json hdr;
  hdr["format"] = "gridflow-checkpoint";
  hdr["version"] = 1;
  hdr["arch"] = to_string(cfg.arch);
  hdr["in_features"] = cfg.in_features;
  hdr["layer_sizes"] = cfg.layer_sizes;
  hdr["fc_hidden"] = cfg.fc_hidden;
  hdr["n_bus"] = cfg.n_bus;
  hdr["dropout"] = cfg.dropout;
  hdr["gat_heads"] = cfg.gat_heads;
  hdr["leaky_slope"] = cfg.leaky_slope;
  hdr["norm"] = {
      {"feat_mean", std::vector<double>(ck.stats.feat_mean, ck.stats.feat_mean + 4)},
      {"feat_std", std::vector<double>(ck.stats.feat_std, ck.stats.feat_std + 4)},
      {"tgt_mean", std::vector<double>(ck.stats.tgt_mean, ck.stats.tgt_mean + 2)},
      {"tgt_std", std::vector<double>(ck.stats.tgt_std, ck.stats.tgt_std + 2)}};
  json bn = json::array();
  for (const LayerParams& l : p.layers)
    bn.push_back({{"mean", l.bn_stats.mean},
                  {"var", l.bn_stats.var}});
  hdr["bn_running"] = bn;
  json shapes = json::array();
  for (Tensor* t : p.trainable()) shapes.push_back(t->shape);
  hdr["shapes"] = shapes;

  std::string out(kCheckpointMagic, 8);
  const std::string header = hdr.dump();
  detail::put_u64_le(out, header.size());
  out += header;
  for (Tensor* t : p.trainable())
    for (double v : t->data) detail::put_f64_le(out, v);
  return out;
}

inline Checkpoint deserialize_checkpoint(const std::string& raw) {
  using nlohmann::json;
  if (raw.size() < 16 || std::memcmp(raw.data(), kCheckpointMagic, 8) != 0)
    throw std::runtime_error("not a checkpoint file (bad magic)");
  const std::uint64_t hlen = detail::get_u64_le(raw, 8);
  if (16 + hlen > raw.size())
    throw std::runtime_error("checkpoint truncated (header)");
  const json hdr = json::parse(raw.substr(16, hlen));

  GnnConfig cfg;
  cfg.arch = arch_from_string(hdr.at("arch").get<std::string>());
  cfg.in_features = hdr.at("in_features").get<int>();
  cfg.layer_sizes = hdr.at("layer_sizes").get<std::vector<int>>();
  cfg.fc_hidden = hdr.at("fc_hidden").get<int>();
  cfg.n_bus = hdr.at("n_bus").get<int>();
  cfg.dropout = hdr.at("dropout").get<double>();
  cfg.gat_heads = hdr.at("gat_heads").get<int>();
  cfg.leaky_slope = hdr.at("leaky_slope").get<double>();

  Checkpoint ck;
  Rng dummy(0);
  ck.params = init_params(dummy, cfg);

  const json& norm = hdr.at("norm");
  for (int i = 0; i < 4; ++i) {
    ck.stats.feat_mean[i] = norm.at("feat_mean").at(i).get<double>();
    ck.stats.feat_std[i] = norm.at("feat_std").at(i).get<double>();
  }
  for (int i = 0; i < 2; ++i) {
    ck.stats.tgt_mean[i] = norm.at("tgt_mean").at(i).get<double>();
    ck.stats.tgt_std[i] = norm.at("tgt_std").at(i).get<double>();
  }
  const json& bn = hdr.at("bn_running");
  if (bn.size() != ck.params.layers.size())
    throw std::runtime_error("checkpoint layer count mismatch");
  for (std::size_t i = 0; i < ck.params.layers.size(); ++i) {
    ck.params.layers[i].bn_stats.mean =
        bn.at(i).at("mean").get<std::vector<double>>();
    ck.params.layers[i].bn_stats.var =
        bn.at(i).at("var").get<std::vector<double>>();
  }

  const json& shapes = hdr.at("shapes");
  std::vector<Tensor*> tensors = ck.params.trainable();
  if (shapes.size() != tensors.size())
    throw std::runtime_error("checkpoint tensor count mismatch");
  std::size_t off = 16 + hlen;
  for (std::size_t i = 0; i < tensors.size(); ++i) {
    const std::vector<int> sh = shapes.at(i).get<std::vector<int>>();
    if (sh != tensors[i]->shape)
      throw std::runtime_error("checkpoint shape mismatch for tensor " +
                               std::to_string(i));
    for (double& v : tensors[i]->data) {
      if (off + 8 > raw.size())
        throw std::runtime_error("checkpoint truncated (weights)");
      v = detail::get_f64_le(raw, off);
      off += 8;
    }
  }
  if (off != raw.size())
    throw std::runtime_error("checkpoint has trailing bytes");
  return ck;
}

inline void save_checkpoint(const std::filesystem::path& path,
                            const Checkpoint& ck) {
  atomic_write(path, serialize_checkpoint(ck));
}

inline Checkpoint load_checkpoint(const std::filesystem::path& path) {
  return deserialize_checkpoint(read_file(path));
}

}  // namespace gridflow
