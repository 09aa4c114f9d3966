#include "metatopic/eval.hpp"

#include <algorithm>
#include <bit>
#include <cmath>
#include <cstring>
#include <fstream>
#include <numeric>
#include <sstream>
#include <stdexcept>

namespace metatopic {
namespace {

constexpr char kIndexMagic[8] = {'M', 'T', 'P', 'C', 'O', 'O', 'C', '\0'};
constexpr std::uint32_t kIndexVersion = 1;
constexpr double kJointSmoothing = 1e-12;

void put_u32(std::ostream& out, std::uint32_t v) {
  for (int i = 0; i < 4; ++i) out.put(static_cast<char>((v >> (8 * i)) & 0xff));
}

void put_u64(std::ostream& out, std::uint64_t v) {
  for (int i = 0; i < 8; ++i) out.put(static_cast<char>((v >> (8 * i)) & 0xff));
}

std::uint64_t get_le(std::istream& in, int bytes) {
  std::uint64_t v = 0;
  for (int i = 0; i < bytes; ++i) {
    const int c = in.get();
    if (c == EOF) throw std::runtime_error("truncated co-occurrence index");
    v |= static_cast<std::uint64_t>(static_cast<unsigned char>(c)) << (8 * i);
  }
  return v;
}

}  // namespace

TopicWords top_words_of_row(const Eigen::Ref<const Eigen::RowVectorXd>& row,
                            const Vocabulary& vocab, std::size_t n) {
  if (static_cast<std::size_t>(row.size()) != vocab.size()) {
    throw ShapeError("topic row does not match the vocabulary");
  }
  if (n > vocab.size()) throw std::invalid_argument("more top words requested than the vocabulary has");
  std::vector<int> order(vocab.size());
  std::iota(order.begin(), order.end(), 0);
  std::partial_sort(order.begin(), order.begin() + static_cast<std::ptrdiff_t>(n), order.end(),
                    [&](int a, int b) {
                      if (row(a) != row(b)) return row(a) > row(b);
                      return vocab.word(a) < vocab.word(b);
                    });
  TopicWords out;
  for (std::size_t r = 0; r < n; ++r) {
    out.words.push_back(vocab.word(order[r]));
    out.weights.push_back(row(order[r]));
  }
  return out;
}

TopicReport top_words(const TrainedModel& model, std::size_t n) {
  TopicReport report;
  const auto& b = model.params.topic_deviations;
  for (Eigen::Index k = 0; k < b.rows(); ++k) {
    report.topics.push_back(top_words_of_row(b.row(k), model.vocabulary, n));
  }
  if (model.config.use_background) {
    report.background = top_words_of_row(model.params.background.row(0), model.vocabulary, n);
  }
  return report;
}

void write_topic_tsv(const std::filesystem::path& path, const TopicReport& report) {
  std::ofstream out(path);
  if (!out) throw std::runtime_error("cannot write " + path.string());
  out << "topic_id\trank\tword\tweight\n";
  auto emit = [&](const std::string& id, const TopicWords& t) {
    for (std::size_t r = 0; r < t.words.size(); ++r) {
      out << id << '\t' << r + 1 << '\t' << t.words[r] << '\t' << format_real(t.weights[r]) << '\n';
    }
  };
  for (std::size_t k = 0; k < report.topics.size(); ++k) emit(std::to_string(k), report.topics[k]);
  emit("background", report.background);
}

// ---- co-occurrence --------------------------------------------------------

CooccurrenceIndex::CooccurrenceIndex(std::vector<std::string> words)
    : words_(std::move(words)), word_df_(words_.size(), 0) {
  for (std::size_t i = 0; i < words_.size(); ++i) {
    if (!lookup_.emplace(words_[i], static_cast<int>(i)).second) {
      throw std::invalid_argument("duplicate word in co-occurrence index: " + words_[i]);
    }
  }
}

std::uint64_t CooccurrenceIndex::key(int i, int j) {
  if (i > j) std::swap(i, j);
  return (static_cast<std::uint64_t>(static_cast<std::uint32_t>(i)) << 32) |
         static_cast<std::uint32_t>(j);
}

std::optional<int> CooccurrenceIndex::find(const std::string& word) const {
  auto it = lookup_.find(word);
  if (it == lookup_.end()) return std::nullopt;
  return it->second;
}

std::uint64_t CooccurrenceIndex::pair_doc_freq(int i, int j) const {
  if (i == j) return word_df_.at(static_cast<std::size_t>(i));
  auto it = pair_df_.find(key(i, j));
  return it == pair_df_.end() ? 0 : it->second;
}

void CooccurrenceIndex::add_document_ids(std::vector<int> ids) {
  std::sort(ids.begin(), ids.end());
  ids.erase(std::unique(ids.begin(), ids.end()), ids.end());
  ++doc_count_;
  for (std::size_t a = 0; a < ids.size(); ++a) {
    ++word_df_.at(static_cast<std::size_t>(ids[a]));
    for (std::size_t b = a + 1; b < ids.size(); ++b) ++pair_df_[key(ids[a], ids[b])];
  }
}

void CooccurrenceIndex::add_document(std::span<const std::string> tokens) {
  std::vector<int> ids;
  for (const auto& t : tokens) {
    if (auto id = find(t)) ids.push_back(*id);
  }
  add_document_ids(std::move(ids));
}

// Layout: magic "MTPCOOC\0", u32 version, u64 doc_count, u32 word count,
// per word (u32 length, bytes, u64 doc freq), u64 pair count, then pairs
// sorted by (i, j) as (u32 i, u32 j, u64 count). Little-endian.
void CooccurrenceIndex::save(const std::filesystem::path& path) const {
  if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
  std::ofstream out(path, std::ios::binary);
  if (!out) throw std::runtime_error("cannot write " + path.string());
  out.write(kIndexMagic, sizeof(kIndexMagic));
  put_u32(out, kIndexVersion);
  put_u64(out, doc_count_);
  put_u32(out, static_cast<std::uint32_t>(words_.size()));
  for (std::size_t i = 0; i < words_.size(); ++i) {
    put_u32(out, static_cast<std::uint32_t>(words_[i].size()));
    out.write(words_[i].data(), static_cast<std::streamsize>(words_[i].size()));
    put_u64(out, word_df_[i]);
  }
  std::vector<std::pair<std::uint64_t, std::uint64_t>> pairs(pair_df_.begin(), pair_df_.end());
  std::sort(pairs.begin(), pairs.end());
  put_u64(out, pairs.size());
  for (const auto& [k, count] : pairs) {
    put_u32(out, static_cast<std::uint32_t>(k >> 32));
    put_u32(out, static_cast<std::uint32_t>(k & 0xffffffffu));
    put_u64(out, count);
  }
}

CooccurrenceIndex CooccurrenceIndex::load(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw std::runtime_error("cannot read " + path.string());
  char magic[sizeof(kIndexMagic)];
  if (!in.read(magic, sizeof(magic)) || std::memcmp(magic, kIndexMagic, sizeof(magic)) != 0) {
    throw std::runtime_error(path.string() + " is not a co-occurrence index");
  }
  if (get_le(in, 4) != kIndexVersion) throw std::runtime_error("unsupported index version");
  const auto docs = get_le(in, 8);
  const auto nwords = get_le(in, 4);
  std::vector<std::string> words;
  std::vector<std::uint64_t> dfs;
  for (std::uint64_t i = 0; i < nwords; ++i) {
    std::string w(get_le(in, 4), '\0');
    if (!in.read(w.data(), static_cast<std::streamsize>(w.size()))) {
      throw std::runtime_error("truncated co-occurrence index");
    }
    words.push_back(std::move(w));
    dfs.push_back(get_le(in, 8));
  }
  CooccurrenceIndex index(std::move(words));
  index.doc_count_ = docs;
  index.word_df_ = std::move(dfs);
  const auto npairs = get_le(in, 8);
  for (std::uint64_t p = 0; p < npairs; ++p) {
    const auto i = static_cast<int>(get_le(in, 4));
    const auto j = static_cast<int>(get_le(in, 4));
    if (i >= j || j >= static_cast<int>(nwords)) throw std::runtime_error("corrupt pair in index");
    index.pair_df_[key(i, j)] = get_le(in, 8);
  }
  if (in.peek() != EOF) throw std::runtime_error("trailing bytes in co-occurrence index");
  return index;
}

CooccurrenceIndex build_cooccurrence(const std::vector<std::vector<std::string>>& documents,
                                     const Vocabulary& vocab) {
  CooccurrenceIndex index(vocab.words());
  for (const auto& doc : documents) index.add_document(doc);
  return index;
}

CooccurrenceIndex build_cooccurrence(const Corpus& corpus) {
  CooccurrenceIndex index(corpus.vocabulary.words());
  for (const auto& doc : corpus.documents) {
    std::vector<int> ids;
    for (const auto& wc : doc.counts) ids.push_back(wc.word);
    index.add_document_ids(std::move(ids));
  }
  return index;
}

// ---- NPMI -----------------------------------------------------------------

double npmi_pair(double p1, double p2, double p12) {
  if (p12 <= 0.0) return -1.0;  // limit as the joint goes to zero
  const double joint = p12 + kJointSmoothing;
  const double denom = -std::log(joint);
  if (denom <= 1e-15) return 1.0;
  return std::clamp(std::log(joint / (p1 * p2)) / denom, -1.0, 1.0);
}

NpmiResult npmi(const std::vector<std::vector<std::string>>& topics,
                const CooccurrenceIndex& index) {
  if (index.doc_count() == 0) throw std::invalid_argument("co-occurrence index is empty");
  const double d = static_cast<double>(index.doc_count());
  NpmiResult r;
  for (const auto& words : topics) {
    double sum = 0.0, sum_raw = 0.0;
    std::size_t count = 0;
    for (std::size_t a = 0; a < words.size(); ++a) {
      for (std::size_t b = a + 1; b < words.size(); ++b) {
        auto i = index.find(words[a]);
        auto j = index.find(words[b]);
        if (!i || !j || index.word_doc_freq(*i) == 0 || index.word_doc_freq(*j) == 0) {
          ++r.pairs_skipped;
          continue;
        }
        const double v = npmi_pair(static_cast<double>(index.word_doc_freq(*i)) / d,
                                   static_cast<double>(index.word_doc_freq(*j)) / d,
                                   static_cast<double>(index.pair_doc_freq(*i, *j)) / d);
        sum += std::max(v, 0.0);
        sum_raw += v;
        ++count;
        ++r.pairs_scored;
      }
    }
    r.per_topic.push_back(count ? sum / static_cast<double>(count) : 0.0);
    r.per_topic_unclamped.push_back(count ? sum_raw / static_cast<double>(count) : 0.0);
  }
  if (!topics.empty()) {
    const double t = static_cast<double>(topics.size());
    r.mean = std::accumulate(r.per_topic.begin(), r.per_topic.end(), 0.0) / t;
    r.mean_unclamped =
        std::accumulate(r.per_topic_unclamped.begin(), r.per_topic_unclamped.end(), 0.0) / t;
  }
  return r;
}

NpmiResult npmi(const TopicReport& report, const CooccurrenceIndex& index) {
  std::vector<std::vector<std::string>> topics;
  for (const auto& t : report.topics) topics.push_back(t.words);
  return npmi(topics, index);
}

// ---- other metrics --------------------------------------------------------

double sparsity_fraction(const ModelParams<double>& params, double threshold) {
  std::size_t small = 0, total = 0;
  for (const Matrix* m : {&params.topic_deviations, &params.covariate_deviations,
                          &params.interaction_deviations}) {
    small += static_cast<std::size_t>((m->array().abs() < threshold).count());
    total += static_cast<std::size_t>(m->size());
  }
  return total ? static_cast<double>(small) / static_cast<double>(total) : 0.0;
}

double accuracy(std::span<const int> predictions, std::span<const int> gold) {
  if (predictions.size() != gold.size()) throw std::invalid_argument("accuracy: length mismatch");
  if (gold.empty()) throw std::invalid_argument("accuracy: no examples");
  std::size_t hits = 0;
  for (std::size_t i = 0; i < gold.size(); ++i) hits += predictions[i] == gold[i];
  return static_cast<double>(hits) / static_cast<double>(gold.size());
}

nlohmann::json EvalMetrics::to_json() const {
  auto opt = [](const std::optional<double>& v) -> nlohmann::json {
    return v ? nlohmann::json(*v) : nlohmann::json(nullptr);
  };
  return {{"perplexity", opt(perplexity)},
          {"npmi_internal", opt(npmi_internal)},
          {"npmi_external", opt(npmi_external)},
          {"npmi_internal_unclamped", opt(npmi_internal_unclamped)},
          {"npmi_external_unclamped", opt(npmi_external_unclamped)},
          {"sparsity", opt(sparsity)},
          {"accuracy", opt(accuracy)},
          {"majority_baseline", opt(majority_baseline)}};
}

void write_metrics_json(const std::filesystem::path& path, const EvalMetrics& metrics) {
  std::ofstream out(path);
  if (!out) throw std::runtime_error("cannot write " + path.string());
  out << metrics.to_json().dump(2) << '\n';
}

}  // namespace metatopic
