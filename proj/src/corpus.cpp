#include "metatopic/corpus.hpp"

#include "metatopic/numkit.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <fstream>
#include <map>
#include <numeric>
#include <set>
#include <sstream>

namespace metatopic {

// Generated from data/stopwords_en.txt at configure time.
extern const char* const kEnglishStopwords;

namespace {

bool is_word_byte(unsigned char c) {
  return (c >= 'a' && c <= 'z') || (c >= '0' && c <= '9') || c >= 0x80;
}

std::string lowercase(std::string_view s) {
  std::string out(s);
  for (char& c : out) {
    if (c >= 'A' && c <= 'Z') c = static_cast<char>(c - 'A' + 'a');
  }
  return out;
}

std::string trim_edges(const std::string& s) {
  std::size_t b = 0;
  std::size_t e = s.size();
  while (b < e && !is_word_byte(static_cast<unsigned char>(s[b]))) ++b;
  while (e > b && !is_word_byte(static_cast<unsigned char>(s[e - 1]))) --e;
  return s.substr(b, e - b);
}

std::vector<std::string> parse_stopword_lines(std::istream& in) {
  std::vector<std::string> words;
  std::string line;
  while (std::getline(in, line)) {
    auto bar = line.find('|');
    if (bar != std::string::npos) line.resize(bar);
    std::istringstream ls(line);
    std::string w;
    while (ls >> w) words.push_back(lowercase(w));
  }
  return words;
}

std::string json_value_string(const nlohmann::json& v) {
  if (v.is_string()) return v.get<std::string>();
  return v.dump();
}

double parse_real(const std::string& s) {
  double v = 0.0;
  auto res = std::from_chars(s.data(), s.data() + s.size(), v);
  if (res.ec != std::errc() || res.ptr != s.data() + s.size()) {
    throw CorpusError("malformed number '" + s + "'");
  }
  return v;
}

std::vector<std::string> split_tabs(const std::string& line) {
  std::vector<std::string> out;
  std::size_t start = 0;
  while (true) {
    auto tab = line.find('\t', start);
    out.push_back(line.substr(start, tab == std::string::npos ? std::string::npos : tab - start));
    if (tab == std::string::npos) break;
    start = tab + 1;
  }
  return out;
}

}  // namespace

// ---- stopwords & tokenization ---------------------------------------------

StopwordList::StopwordList(std::vector<std::string> words) {
  for (auto& w : words) words_.insert(lowercase(w));
}

const StopwordList& StopwordList::english() {
  static const StopwordList list = [] {
    std::istringstream in(kEnglishStopwords);
    return StopwordList(parse_stopword_lines(in));
  }();
  return list;
}

StopwordList StopwordList::from_file(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw CorpusError("cannot read stopword file " + path.string());
  return StopwordList(parse_stopword_lines(in));
}

bool StopwordList::contains(std::string_view word) const {
  return words_.count(std::string(word)) > 0;
}

std::vector<std::string> tokenize(std::string_view text, const StopwordList& stopwords) {
  std::vector<std::string> out;
  std::size_t i = 0;
  while (i < text.size()) {
    while (i < text.size() && std::isspace(static_cast<unsigned char>(text[i]))) ++i;
    std::size_t start = i;
    while (i < text.size() && !std::isspace(static_cast<unsigned char>(text[i]))) ++i;
    if (start == i) continue;
    std::string raw = lowercase(text.substr(start, i - start));
    std::string stripped;
    stripped.reserve(raw.size());
    bool has_digit = false;
    for (unsigned char c : raw) {
      if (!is_word_byte(c)) continue;
      if (c >= '0' && c <= '9') has_digit = true;
      stripped.push_back(static_cast<char>(c));
    }
    if (has_digit || stripped.size() < 3) continue;
    if (stopwords.contains(stripped) || stopwords.contains(trim_edges(raw))) continue;
    out.push_back(std::move(stripped));
  }
  return out;
}

// ---- vocabulary -----------------------------------------------------------

Vocabulary::Vocabulary(std::vector<std::string> words) : words_(std::move(words)) {
  index_.reserve(words_.size());
  for (std::size_t i = 0; i < words_.size(); ++i) {
    if (!index_.emplace(words_[i], static_cast<int>(i)).second) {
      throw CorpusError("duplicate vocabulary word '" + words_[i] + "'");
    }
  }
}

std::optional<int> Vocabulary::find(std::string_view word) const {
  auto it = index_.find(std::string(word));
  if (it == index_.end()) return std::nullopt;
  return it->second;
}

std::uint64_t Vocabulary::hash() const {
  std::string joined;
  for (const auto& w : words_) {
    joined += w;
    joined += '\n';
  }
  return fnv1a64(joined);
}

Vocabulary build_vocab(const std::vector<std::vector<std::string>>& token_lists,
                       std::size_t max_size) {
  if (max_size == 0) throw CorpusError("vocabulary size must be positive");
  std::unordered_map<std::string, std::size_t> doc_freq;
  for (const auto& tokens : token_lists) {
    std::unordered_set<std::string_view> seen(tokens.begin(), tokens.end());
    for (auto w : seen) ++doc_freq[std::string(w)];
  }
  if (doc_freq.empty()) throw CorpusError("no tokens survived preprocessing");
  std::vector<std::pair<std::string, std::size_t>> ranked(doc_freq.begin(), doc_freq.end());
  std::sort(ranked.begin(), ranked.end(), [](const auto& a, const auto& b) {
    if (a.second != b.second) return a.second > b.second;
    return a.first < b.first;
  });
  if (ranked.size() > max_size) ranked.resize(max_size);
  std::vector<std::string> words;
  words.reserve(ranked.size());
  for (auto& [w, df] : ranked) words.push_back(w);
  return Vocabulary(std::move(words));
}

// ---- metadata -------------------------------------------------------------

std::vector<CovariateField> MetadataSchema::parse_covariate_fields(std::string_view spec) {
  std::vector<CovariateField> fields;
  std::size_t start = 0;
  while (start <= spec.size()) {
    auto comma = spec.find(',', start);
    std::string item(spec.substr(start, comma == std::string_view::npos ? spec.npos
                                                                          : comma - start));
    if (!item.empty()) {
      CovariateField f;
      auto colon = item.find(':');
      f.name = item.substr(0, colon);
      if (colon != std::string::npos) {
        std::string enc = item.substr(colon + 1);
        if (enc == "real") {
          f.encoding = CovariateEncoding::kReal;
        } else if (enc != "onehot") {
          throw CorpusError("unknown covariate encoding '" + enc + "' for field " + f.name);
        }
      }
      if (f.name.empty()) throw CorpusError("empty covariate field name");
      fields.push_back(std::move(f));
    }
    if (comma == std::string_view::npos) break;
    start = comma + 1;
  }
  return fields;
}

nlohmann::json MetadataSchema::to_json() const {
  nlohmann::json j;
  j["label_field"] = label_field ? nlohmann::json(*label_field) : nlohmann::json(nullptr);
  j["covariate_fields"] = nlohmann::json::array();
  for (const auto& f : covariate_fields) {
    j["covariate_fields"].push_back(
        {{"name", f.name},
         {"encoding", f.encoding == CovariateEncoding::kReal ? "real" : "onehot"}});
  }
  return j;
}

MetadataSchema MetadataSchema::from_json(const nlohmann::json& j) {
  MetadataSchema s;
  if (j.contains("label_field") && !j["label_field"].is_null()) {
    s.label_field = j["label_field"].get<std::string>();
  }
  if (j.contains("covariate_fields")) {
    for (const auto& f : j["covariate_fields"]) {
      s.covariate_fields.push_back(
          {f.at("name").get<std::string>(), f.at("encoding").get<std::string>() == "real"
                                                ? CovariateEncoding::kReal
                                                : CovariateEncoding::kOneHot});
    }
  }
  return s;
}

MetadataLevels fit_metadata(const std::vector<nlohmann::json>& records,
                            const MetadataSchema& schema) {
  MetadataLevels levels;
  auto require_field = [](const nlohmann::json& rec, const std::string& field) {
    if (!rec.is_object() || !rec.contains(field)) {
      throw CorpusError("record is missing metadata field '" + field + "'");
    }
  };
  if (schema.label_field) {
    std::set<std::string> values;
    for (const auto& rec : records) {
      require_field(rec, *schema.label_field);
      values.insert(json_value_string(rec[*schema.label_field]));
    }
    levels.label_names.assign(values.begin(), values.end());
  }
  for (const auto& field : schema.covariate_fields) {
    std::unordered_map<std::string, int> columns;
    if (field.encoding == CovariateEncoding::kReal) {
      for (const auto& rec : records) {
        require_field(rec, field.name);
        if (!rec[field.name].is_number()) {
          throw CorpusError("real-valued covariate '" + field.name + "' is not a number");
        }
      }
      columns.emplace("", static_cast<int>(levels.covariate_names.size()));
      levels.covariate_names.push_back(field.name);
    } else {
      std::set<std::string> values;
      for (const auto& rec : records) {
        require_field(rec, field.name);
        values.insert(json_value_string(rec[field.name]));
      }
      for (const auto& v : values) {
        columns.emplace(v, static_cast<int>(levels.covariate_names.size()));
        levels.covariate_names.push_back(field.name + "=" + v);
      }
    }
    levels.field_columns.push_back(std::move(columns));
  }
  return levels;
}

Document encode_document(std::string_view id, const std::vector<std::string>& tokens,
                         const Vocabulary& vocab, const nlohmann::json& record,
                         const MetadataSchema& schema, const MetadataLevels& levels) {
  if (vocab.empty()) throw CorpusError("empty vocabulary");
  Document doc;
  doc.id = std::string(id);
  std::map<int, int> counts;
  for (const auto& t : tokens) {
    if (auto w = vocab.find(t)) ++counts[*w];
  }
  if (counts.empty()) {
    throw EmptyDocumentError("document '" + doc.id + "' has no in-vocabulary tokens");
  }
  for (auto [w, c] : counts) {
    doc.counts.push_back({w, c});
    doc.n_tokens += c;
  }
  if (schema.label_field) {
    if (!record.is_object() || !record.contains(*schema.label_field)) {
      throw CorpusError("record is missing metadata field '" + *schema.label_field + "'");
    }
    auto value = json_value_string(record[*schema.label_field]);
    auto it = std::find(levels.label_names.begin(), levels.label_names.end(), value);
    if (it == levels.label_names.end()) throw CorpusError("unknown label value '" + value + "'");
    doc.label = static_cast<int>(it - levels.label_names.begin());
  }
  doc.covariates.assign(levels.covariate_names.size(), 0.0);
  for (std::size_t f = 0; f < schema.covariate_fields.size(); ++f) {
    const auto& field = schema.covariate_fields[f];
    if (!record.is_object() || !record.contains(field.name)) {
      throw CorpusError("record is missing metadata field '" + field.name + "'");
    }
    const auto& columns = levels.field_columns.at(f);
    if (field.encoding == CovariateEncoding::kReal) {
      doc.covariates[columns.at("")] = record[field.name].get<double>();
    } else {
      auto value = json_value_string(record[field.name]);
      auto it = columns.find(value);
      if (it == columns.end()) {
        throw CorpusError("unknown value '" + value + "' for covariate " + field.name);
      }
      doc.covariates[it->second] = 1.0;
    }
  }
  return doc;
}

// ---- corpus ---------------------------------------------------------------

bool Corpus::has_labels() const {
  return !label_names.empty() &&
         std::any_of(documents.begin(), documents.end(), [](const auto& d) { return d.label; });
}

std::size_t Corpus::total_tokens() const {
  std::size_t n = 0;
  for (const auto& d : documents) n += d.n_tokens;
  return n;
}

bool Corpus::covariates_categorical() const {
  if (covariate_names.empty()) return false;
  return schema.covariate_fields.size() == 1 &&
         schema.covariate_fields[0].encoding == CovariateEncoding::kOneHot;
}

Corpus Corpus::subset(const std::vector<std::size_t>& indices) const {
  Corpus out;
  out.vocabulary = vocabulary;
  out.label_names = label_names;
  out.covariate_names = covariate_names;
  out.schema = schema;
  out.seed = seed;
  out.documents.reserve(indices.size());
  for (auto i : indices) out.documents.push_back(documents.at(i));
  return out;
}

void Corpus::validate() const {
  const auto v = static_cast<int>(vocab_size());
  for (const auto& d : documents) {
    int total = 0;
    int prev = -1;
    for (const auto& wc : d.counts) {
      if (wc.word <= prev || wc.word >= v || wc.count <= 0) {
        throw CorpusError("document '" + d.id + "' has invalid counts");
      }
      prev = wc.word;
      total += wc.count;
    }
    if (total != d.n_tokens || total <= 0) {
      throw CorpusError("document '" + d.id + "' token total mismatch");
    }
    if (d.label && (*d.label < 0 || *d.label >= static_cast<int>(label_names.size()))) {
      throw CorpusError("document '" + d.id + "' label out of range");
    }
    if (d.covariates.size() != covariate_names.size()) {
      throw CorpusError("document '" + d.id + "' covariate width mismatch");
    }
  }
}

std::vector<std::size_t> split_sizes(std::size_t n, const SplitFractions& fractions) {
  const double f[3] = {fractions.train, fractions.dev, fractions.test};
  for (double x : f) {
    if (!(x > 0.0)) throw CorpusError("split fractions must be positive");
  }
  if (std::abs(f[0] + f[1] + f[2] - 1.0) > 1e-9) {
    throw CorpusError("split fractions must sum to 1");
  }
  std::vector<std::size_t> sizes(3);
  std::vector<std::pair<double, int>> remainders;
  std::size_t assigned = 0;
  for (int i = 0; i < 3; ++i) {
    double exact = f[i] * static_cast<double>(n);
    sizes[i] = static_cast<std::size_t>(std::floor(exact));
    assigned += sizes[i];
    remainders.emplace_back(exact - std::floor(exact), i);
  }
  std::stable_sort(remainders.begin(), remainders.end(),
                   [](const auto& a, const auto& b) { return a.first > b.first; });
  for (std::size_t k = 0; assigned < n; ++k, ++assigned) ++sizes[remainders[k % 3].second];
  for (auto s : sizes) {
    if (s == 0) throw CorpusError("split would leave an empty partition");
  }
  return sizes;
}

CorpusSplit split_corpus(const Corpus& corpus, const SplitFractions& fractions,
                         std::uint64_t seed) {
  auto sizes = split_sizes(corpus.num_docs(), fractions);
  std::vector<std::size_t> order(corpus.num_docs());
  std::iota(order.begin(), order.end(), 0);
  Rng rng(seed);
  shuffle(std::span<std::size_t>(order), rng);
  std::vector<std::size_t> parts[3];
  std::size_t pos = 0;
  for (int p = 0; p < 3; ++p) {
    parts[p].assign(order.begin() + pos, order.begin() + pos + sizes[p]);
    std::sort(parts[p].begin(), parts[p].end());
    pos += sizes[p];
  }
  return {corpus.subset(parts[0]), corpus.subset(parts[1]), corpus.subset(parts[2])};
}

// ---- input records --------------------------------------------------------

std::vector<RawRecord> read_jsonl(const std::filesystem::path& path,
                                  const StopwordList& stopwords) {
  std::ifstream in(path);
  if (!in) throw CorpusError("cannot read input " + path.string());
  std::vector<RawRecord> records;
  std::string line;
  std::size_t lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
    nlohmann::json j;
    try {
      j = nlohmann::json::parse(line);
    } catch (const nlohmann::json::parse_error& e) {
      throw CorpusError(path.string() + ":" + std::to_string(lineno) + ": invalid JSON");
    }
    if (!j.is_object()) {
      throw CorpusError(path.string() + ":" + std::to_string(lineno) + ": expected an object");
    }
    RawRecord rec;
    rec.id = j.contains("id") ? json_value_string(j["id"]) : std::to_string(records.size());
    if (j.contains("tokens")) {
      rec.tokens = j["tokens"].get<std::vector<std::string>>();
    } else if (j.contains("text")) {
      rec.tokens = tokenize(j["text"].get<std::string>(), stopwords);
    } else {
      throw CorpusError(path.string() + ":" + std::to_string(lineno) +
                        ": record has neither 'text' nor 'tokens'");
    }
    rec.metadata = std::move(j);
    records.push_back(std::move(rec));
  }
  return records;
}

PreprocessResult preprocess(const std::vector<RawRecord>& records,
                            const PreprocessOptions& options) {
  std::vector<std::vector<std::string>> token_lists;
  std::vector<nlohmann::json> metadata;
  token_lists.reserve(records.size());
  for (const auto& r : records) {
    token_lists.push_back(r.tokens);
    metadata.push_back(r.metadata);
  }
  PreprocessResult result;
  auto& corpus = result.corpus;
  corpus.vocabulary = build_vocab(token_lists, options.vocab_size);
  auto levels = fit_metadata(metadata, options.schema);
  corpus.label_names = levels.label_names;
  corpus.covariate_names = levels.covariate_names;
  corpus.schema = options.schema;
  corpus.seed = options.seed;
  for (const auto& r : records) {
    try {
      corpus.documents.push_back(encode_document(r.id, r.tokens, corpus.vocabulary, r.metadata,
                                                 options.schema, levels));
    } catch (const EmptyDocumentError&) {
      result.dropped_ids.push_back(r.id);
    }
  }
  if (corpus.documents.empty()) throw CorpusError("every document was empty after preprocessing");
  return result;
}

// ---- corpus directory -----------------------------------------------------

void save_corpus(const Corpus& corpus, const std::filesystem::path& dir) {
  std::filesystem::create_directories(dir);
  {
    std::ofstream out(dir / "vocab.txt", std::ios::binary);
    for (const auto& w : corpus.vocabulary.words()) out << w << '\n';
  }
  {
    std::ofstream out(dir / "counts.txt", std::ios::binary);
    for (std::size_t i = 0; i < corpus.documents.size(); ++i) {
      for (const auto& wc : corpus.documents[i].counts) {
        out << i << ' ' << wc.word << ' ' << wc.count << '\n';
      }
    }
  }
  {
    std::ofstream out(dir / "labels.tsv", std::ios::binary);
    out << "id\tlabel\n";
    for (const auto& d : corpus.documents) {
      out << d.id << '\t' << (d.label ? corpus.label_names.at(*d.label) : std::string()) << '\n';
    }
  }
  {
    std::ofstream out(dir / "covariates.tsv", std::ios::binary);
    out << "id";
    for (const auto& n : corpus.covariate_names) out << '\t' << n;
    out << '\n';
    for (const auto& d : corpus.documents) {
      out << d.id;
      for (double v : d.covariates) out << '\t' << format_real(v);
      out << '\n';
    }
  }
  nlohmann::json manifest;
  manifest["format"] = "metatopic-corpus";
  manifest["version"] = 1;
  manifest["V"] = corpus.vocab_size();
  manifest["L"] = corpus.num_labels();
  manifest["C"] = corpus.num_covariates();
  manifest["D"] = corpus.num_docs();
  manifest["schema"] = corpus.schema.to_json();
  manifest["seed"] = corpus.seed;
  manifest["label_names"] = corpus.label_names;
  manifest["covariate_names"] = corpus.covariate_names;
  std::ofstream out(dir / "manifest.json", std::ios::binary);
  out << manifest.dump(2) << '\n';
}

Corpus load_corpus(const std::filesystem::path& dir) {
  auto open = [&](const char* name) {
    std::ifstream in(dir / name, std::ios::binary);
    if (!in) throw CorpusError("cannot read " + (dir / name).string());
    return in;
  };
  Corpus corpus;
  nlohmann::json manifest;
  {
    auto in = open("manifest.json");
    try {
      in >> manifest;
    } catch (const nlohmann::json::exception&) {
      throw CorpusError("malformed manifest.json in " + dir.string());
    }
  }
  corpus.schema = MetadataSchema::from_json(manifest.at("schema"));
  corpus.seed = manifest.value("seed", std::uint64_t{0});
  corpus.label_names = manifest.at("label_names").get<std::vector<std::string>>();
  corpus.covariate_names = manifest.at("covariate_names").get<std::vector<std::string>>();
  {
    auto in = open("vocab.txt");
    std::vector<std::string> words;
    std::string line;
    while (std::getline(in, line)) {
      if (!line.empty()) words.push_back(line);
    }
    corpus.vocabulary = Vocabulary(std::move(words));
  }
  {
    auto in = open("labels.tsv");
    std::string line;
    std::getline(in, line);
    while (std::getline(in, line)) {
      auto cols = split_tabs(line);
      if (cols.size() != 2) throw CorpusError("malformed labels.tsv line: " + line);
      Document d;
      d.id = cols[0];
      if (!cols[1].empty()) {
        auto it = std::find(corpus.label_names.begin(), corpus.label_names.end(), cols[1]);
        if (it == corpus.label_names.end()) throw CorpusError("unknown label " + cols[1]);
        d.label = static_cast<int>(it - corpus.label_names.begin());
      }
      corpus.documents.push_back(std::move(d));
    }
  }
  {
    auto in = open("covariates.tsv");
    std::string line;
    std::getline(in, line);
    std::size_t i = 0;
    while (std::getline(in, line)) {
      auto cols = split_tabs(line);
      if (i >= corpus.documents.size() || cols.size() != corpus.covariate_names.size() + 1 ||
          cols[0] != corpus.documents[i].id) {
        throw CorpusError("covariates.tsv does not match labels.tsv at row " + std::to_string(i));
      }
      for (std::size_t c = 1; c < cols.size(); ++c) {
        corpus.documents[i].covariates.push_back(parse_real(cols[c]));
      }
      ++i;
    }
    if (i != corpus.documents.size()) throw CorpusError("covariates.tsv row count mismatch");
  }
  {
    auto in = open("counts.txt");
    std::size_t doc = 0;
    long long word = 0;
    long long count = 0;
    while (in >> doc >> word >> count) {
      if (doc >= corpus.documents.size()) throw CorpusError("counts.txt document out of range");
      auto& d = corpus.documents[doc];
      d.counts.push_back({static_cast<int>(word), static_cast<int>(count)});
      d.n_tokens += static_cast<int>(count);
    }
    if (!in.eof()) throw CorpusError("malformed counts.txt");
  }
  const auto d_expected = manifest.at("D").get<std::size_t>();
  if (corpus.documents.size() != d_expected || corpus.vocab_size() != manifest.at("V").get<std::size_t>()) {
    throw CorpusError("corpus directory disagrees with its manifest");
  }
  corpus.validate();
  return corpus;
}

}  // namespace metatopic
