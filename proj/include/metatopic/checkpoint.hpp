#pragma once

// A trained model bundle and its binary checkpoint container.
//
// Layout (all integers little-endian, reals IEEE-754 binary64 little-endian):
//   magic    8 bytes  "MTPCKPT\0"
//   version  u32      currently 1
//   hlen     u32      byte length of the JSON header
//   header   hlen     UTF-8 JSON (sorted keys): config, dims, flags, prior,
//                     vocabulary, vocabulary hash, names, seed, lambda
//   count    u32      number of tensors
//   per tensor:
//     nlen u32, name (nlen bytes), rows u32, cols u32, rows*cols f64 row-major
// Tensors appear in for_each_tensor order.

#include "metatopic/corpus.hpp"
#include "metatopic/model.hpp"

#include <json.hpp>

#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

namespace metatopic {

class CheckpointError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

struct TrainedModel {
  ModelConfig config;
  ModelParams<double> params;
  Vocabulary vocabulary;
  std::vector<std::string> label_names;
  std::vector<std::string> covariate_names;
  double anneal_lambda = 0.0;  // lambda in effect for the stored parameters
  std::uint64_t seed = 0;
  nlohmann::json train_config;  // informational

  PriorSpec prior() const { return config.prior(); }
  /// Throws CheckpointError if the corpus vocabulary differs from the model's.
  void check_corpus(const Corpus& corpus) const;
};

inline constexpr std::uint32_t kCheckpointVersion = 1;

std::string serialize_checkpoint(const TrainedModel& model);
TrainedModel deserialize_checkpoint(const std::string& bytes);

void save_checkpoint(const TrainedModel& model, const std::filesystem::path& path);
TrainedModel load_checkpoint(const std::filesystem::path& path);

nlohmann::json config_to_json(const ModelConfig& config);
ModelConfig config_from_json(const nlohmann::json& j);

}  // namespace metatopic
