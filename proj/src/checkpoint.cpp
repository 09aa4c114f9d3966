#include "metatopic/checkpoint.hpp"

#include <bit>
#include <cstring>
#include <fstream>
#include <sstream>

namespace metatopic {
namespace {

constexpr char kMagic[8] = {'M', 'T', 'P', 'C', 'K', 'P', 'T', '\0'};

void put_u32(std::string& out, std::uint32_t v) {
  for (int i = 0; i < 4; ++i) out.push_back(static_cast<char>((v >> (8 * i)) & 0xff));
}

void put_f64(std::string& out, double v) {
  auto bits = std::bit_cast<std::uint64_t>(v);
  for (int i = 0; i < 8; ++i) out.push_back(static_cast<char>((bits >> (8 * i)) & 0xff));
}

class Reader {
 public:
  explicit Reader(const std::string& bytes) : bytes_(bytes) {}

  const char* take(std::size_t n) {
    if (pos_ + n > bytes_.size()) throw CheckpointError("truncated checkpoint");
    const char* p = bytes_.data() + pos_;
    pos_ += n;
    return p;
  }
  std::uint32_t u32() {
    auto p = reinterpret_cast<const unsigned char*>(take(4));
    std::uint32_t v = 0;
    for (int i = 0; i < 4; ++i) v |= static_cast<std::uint32_t>(p[i]) << (8 * i);
    return v;
  }
  double f64() {
    auto p = reinterpret_cast<const unsigned char*>(take(8));
    std::uint64_t v = 0;
    for (int i = 0; i < 8; ++i) v |= static_cast<std::uint64_t>(p[i]) << (8 * i);
    return std::bit_cast<double>(v);
  }
  std::string str(std::size_t n) { return std::string(take(n), n); }
  bool done() const { return pos_ == bytes_.size(); }

 private:
  const std::string& bytes_;
  std::size_t pos_ = 0;
};

}  // namespace

nlohmann::json config_to_json(const ModelConfig& c) {
  nlohmann::json j;
  j["vocab_size"] = c.dims.vocab_size;
  j["num_topics"] = c.dims.num_topics;
  j["embedding_dim"] = c.dims.embedding_dim;
  j["num_covariates"] = c.dims.num_covariates;
  j["covariate_embedding_dim"] = c.dims.covariate_embedding_dim;
  j["num_labels"] = c.dims.num_labels;
  j["label_hidden"] = c.dims.label_hidden;
  j["alpha"] = c.alpha;
  j["use_background"] = c.use_background;
  j["use_interactions"] = c.use_interactions;
  j["freeze_word_vectors"] = c.freeze_word_vectors;
  j["freeze_background"] = c.freeze_background;
  j["covariates_categorical"] = c.covariates_categorical;
  return j;
}

ModelConfig config_from_json(const nlohmann::json& j) {
  ModelConfig c;
  c.dims.vocab_size = j.at("vocab_size").get<int>();
  c.dims.num_topics = j.at("num_topics").get<int>();
  c.dims.embedding_dim = j.at("embedding_dim").get<int>();
  c.dims.num_covariates = j.at("num_covariates").get<int>();
  c.dims.covariate_embedding_dim = j.at("covariate_embedding_dim").get<int>();
  c.dims.num_labels = j.at("num_labels").get<int>();
  c.dims.label_hidden = j.at("label_hidden").get<int>();
  c.alpha = j.at("alpha").get<double>();
  c.use_background = j.at("use_background").get<bool>();
  c.use_interactions = j.at("use_interactions").get<bool>();
  c.freeze_word_vectors = j.at("freeze_word_vectors").get<bool>();
  c.freeze_background = j.at("freeze_background").get<bool>();
  c.covariates_categorical = j.at("covariates_categorical").get<bool>();
  return c;
}

void TrainedModel::check_corpus(const Corpus& corpus) const {
  if (corpus.vocabulary.hash() != vocabulary.hash() || corpus.vocab_size() != vocabulary.size()) {
    throw CheckpointError("corpus vocabulary does not match the checkpoint");
  }
}

std::string serialize_checkpoint(const TrainedModel& model) {
  nlohmann::json header;
  header["config"] = config_to_json(model.config);
  const auto prior = model.config.prior();
  header["prior"] = {{"alpha", prior.alpha},
                     {"mu0", std::vector<double>(prior.mu0.begin(), prior.mu0.end())},
                     {"sigma0_sq", std::vector<double>(prior.sigma0_sq.begin(), prior.sigma0_sq.end())}};
  header["vocabulary"] = model.vocabulary.words();
  header["vocabulary_hash"] = model.vocabulary.hash();
  header["label_names"] = model.label_names;
  header["covariate_names"] = model.covariate_names;
  header["anneal_lambda"] = model.anneal_lambda;
  header["seed"] = model.seed;
  header["batchnorm"] = {{"momentum", model.params.mu_norm.momentum},
                         {"epsilon", model.params.mu_norm.epsilon}};
  header["train_config"] = model.train_config;
  const std::string header_text = header.dump();

  std::string out(kMagic, sizeof(kMagic));
  put_u32(out, kCheckpointVersion);
  put_u32(out, static_cast<std::uint32_t>(header_text.size()));
  out += header_text;
  std::uint32_t count = 0;
  for_each_tensor([&](const TensorInfo&, const Matrix&) { ++count; }, model.params);
  put_u32(out, count);
  for_each_tensor(
      [&](const TensorInfo& info, const Matrix& m) {
        put_u32(out, static_cast<std::uint32_t>(info.name.size()));
        out.append(info.name);
        put_u32(out, static_cast<std::uint32_t>(m.rows()));
        put_u32(out, static_cast<std::uint32_t>(m.cols()));
        for (Eigen::Index i = 0; i < m.size(); ++i) put_f64(out, m.data()[i]);
      },
      model.params);
  return out;
}

TrainedModel deserialize_checkpoint(const std::string& bytes) {
  Reader in(bytes);
  if (std::memcmp(in.take(sizeof(kMagic)), kMagic, sizeof(kMagic)) != 0) {
    throw CheckpointError("not a checkpoint file");
  }
  const auto version = in.u32();
  if (version != kCheckpointVersion) {
    throw CheckpointError("unsupported checkpoint version " + std::to_string(version));
  }
  nlohmann::json header;
  try {
    header = nlohmann::json::parse(in.str(in.u32()));
  } catch (const nlohmann::json::exception&) {
    throw CheckpointError("malformed checkpoint header");
  }
  TrainedModel model;
  model.config = config_from_json(header.at("config"));
  model.vocabulary = Vocabulary(header.at("vocabulary").get<std::vector<std::string>>());
  if (model.vocabulary.hash() != header.at("vocabulary_hash").get<std::uint64_t>()) {
    throw CheckpointError("checkpoint vocabulary hash mismatch");
  }
  model.label_names = header.at("label_names").get<std::vector<std::string>>();
  model.covariate_names = header.at("covariate_names").get<std::vector<std::string>>();
  model.anneal_lambda = header.at("anneal_lambda").get<double>();
  model.seed = header.at("seed").get<std::uint64_t>();
  model.train_config = header.value("train_config", nlohmann::json());
  model.params = ModelParams<double>::zeros(model.config);
  const double momentum = header.at("batchnorm").at("momentum").get<double>();
  const double epsilon = header.at("batchnorm").at("epsilon").get<double>();
  for (auto* bn : {&model.params.mu_norm, &model.params.log_var_norm, &model.params.eta_norm}) {
    bn->momentum = momentum;
    bn->epsilon = epsilon;
  }

  std::uint32_t expected = 0;
  for_each_tensor([&](const TensorInfo&, const Matrix&) { ++expected; }, model.params);
  if (in.u32() != expected) throw CheckpointError("unexpected tensor count");
  for_each_tensor(
      [&](const TensorInfo& info, Matrix& m) {
        auto name = in.str(in.u32());
        if (name != info.name) throw CheckpointError("unexpected tensor " + name);
        const auto rows = in.u32();
        const auto cols = in.u32();
        if (rows != m.rows() || cols != m.cols()) {
          throw CheckpointError("tensor " + name + " has the wrong shape");
        }
        for (Eigen::Index i = 0; i < m.size(); ++i) m.data()[i] = in.f64();
      },
      model.params);
  if (!in.done()) throw CheckpointError("trailing bytes in checkpoint");
  return model;
}

void save_checkpoint(const TrainedModel& model, const std::filesystem::path& path) {
  if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
  std::ofstream out(path, std::ios::binary);
  if (!out) throw CheckpointError("cannot write " + path.string());
  const auto bytes = serialize_checkpoint(model);
  out.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
}

TrainedModel load_checkpoint(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw CheckpointError("cannot read " + path.string());
  std::ostringstream ss;
  ss << in.rdbuf();
  return deserialize_checkpoint(ss.str());
}

}  // namespace metatopic
