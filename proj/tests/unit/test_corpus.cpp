#include "metatopic/corpus.hpp"

#include "support/fixtures.hpp"

#include <doctest.h>

#include <algorithm>
#include <fstream>
#include <sstream>

using namespace metatopic;
using namespace metatopic::testing;
using Tokens = std::vector<std::string>;

namespace {

std::string read_file(const std::filesystem::path& p) {
  std::ifstream in(p, std::ios::binary);
  std::stringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

std::string join(const Tokens& t) {
  std::string s;
  for (const auto& w : t) s += w + " ";
  return s;
}

RawRecord record(std::string id, Tokens tokens, nlohmann::json meta = nlohmann::json::object()) {
  return {std::move(id), std::move(tokens), std::move(meta)};
}

std::vector<RawRecord> mini_records() {
  return {
      record("a", {"economy", "jobs", "tax", "tax"}, {{"tone", "pro"}, {"year", 2001}}),
      record("b", {"border", "jobs", "visa"}, {{"tone", "anti"}, {"year", 2002}}),
      record("c", {"court", "visa", "border"}, {{"tone", "pro"}, {"year", 2001}}),
      record("d", {"zzzz"}, {{"tone", "anti"}, {"year", 2003}}),
      record("e", {"economy", "court"}, {{"tone", "anti"}, {"year", 2003}}),
      record("f", {"tax", "visa", "economy"}, {{"tone", "pro"}, {"year", 2002}}),
  };
}

}  // namespace

TEST_CASE("tokenize follows the stated rules") {
  CHECK(tokenize("The 3 big cats ran.") == Tokens{"big", "cats", "ran"});
  CHECK(tokenize("").empty());
  CHECK(tokenize("   \t\n ").empty());
  CHECK(tokenize("cat's b2b x1 ab abc") == Tokens{"cats", "abc"});
  CHECK(tokenize("Hello, WORLD!!") == Tokens{"hello", "world"});
  CHECK(tokenize("co-operate e.g. U.S.A.") == Tokens{"cooperate", "usa"});
  CHECK(tokenize("caf\xc3\xa9") == Tokens{"caf\xc3\xa9"});
}

TEST_CASE("tokenize against the shipped stopword list") {
  // "don't" is on the list in its apostrophe form; "stop" and "believin" are not.
  CHECK(StopwordList::english().contains("don't"));
  CHECK(!StopwordList::english().contains("stop"));
  CHECK(tokenize("Don't STOP believin'") == Tokens{"stop", "believin"});
  CHECK(tokenize("Don't STOP believin'", StopwordList{}) == Tokens{"dont", "stop", "believin"});
  CHECK(tokenize("they're THEIR them") .empty());
  CHECK(StopwordList::english().size() > 150);
}

TEST_CASE("custom stopword files") {
  TempDir dir("stop");
  std::ofstream(dir / "s.txt") << "| comment line\nBig   | trailing comment\n\ncats\n";
  auto list = StopwordList::from_file(dir / "s.txt");
  CHECK(list.size() == 2);
  CHECK(tokenize("The big cats ran", list) == Tokens{"the", "ran"});
  CHECK_THROWS_AS(StopwordList::from_file(dir / "missing.txt"), CorpusError);
}

TEST_CASE("tokenize is idempotent on its own output") {
  Rng rng(12);
  const std::string alphabet = "abcdefghij KLMNO 0123 .,'!-";
  for (int trial = 0; trial < 300; ++trial) {
    std::string text;
    const int n = static_cast<int>(rng.below(80));
    for (int i = 0; i < n; ++i) text += alphabet[rng.below(alphabet.size())];
    const auto once = tokenize(text);
    CHECK(tokenize(join(once)) == once);
    for (const auto& t : once) {
      CHECK(t.size() >= 3);
      CHECK(std::none_of(t.begin(), t.end(), [](char c) { return c >= '0' && c <= '9'; }));
      CHECK(!StopwordList::english().contains(t));
    }
  }
}

TEST_CASE("build_vocab ranks by document frequency") {
  CHECK(build_vocab({{"a-word", "b-word"}, {"a-word"}}, 1).words() == Tokens{"a-word"});
  CHECK(build_vocab({{"xxx"}, {"yyy"}}, 2).words() == Tokens{"xxx", "yyy"});
  CHECK(build_vocab({{"yyy"}, {"xxx"}}, 2).words() == Tokens{"xxx", "yyy"});
  std::vector<Tokens> ten = {{"w0", "w1", "w2", "w3", "w4", "w5", "w6", "w7", "w8", "w9"}};
  CHECK(build_vocab(ten, 5).size() == 5);
  // token frequency does not matter: "rep" occurs 5 times in one document
  CHECK(build_vocab({{"rep", "rep", "rep", "rep", "rep"}, {"two"}, {"two"}}, 1).words() ==
        Tokens{"two"});
  CHECK_THROWS_AS(build_vocab({{}, {}}, 5), CorpusError);
  CHECK_THROWS_AS(build_vocab({{"a"}}, 0), CorpusError);
}

TEST_CASE("build_vocab is invariant to document order") {
  Rng rng(5);
  std::vector<Tokens> docs;
  for (int d = 0; d < 40; ++d) {
    Tokens t;
    for (int i = 0; i < 8; ++i) t.push_back("w" + std::to_string(rng.below(30)));
    docs.push_back(t);
  }
  const auto base = build_vocab(docs, 12);
  for (int trial = 0; trial < 10; ++trial) {
    shuffle(std::span<Tokens>(docs), rng);
    CHECK(build_vocab(docs, 12) == base);
  }
}

TEST_CASE("vocabulary lookup and hash") {
  Vocabulary v({"big", "cats", "ran"});
  CHECK(v.find("cats") == 1);
  CHECK(!v.find("dogs"));
  CHECK(v.hash() == fnv1a64("big\ncats\nran\n"));
  CHECK_THROWS_AS(Vocabulary({"a", "a"}), CorpusError);
}

TEST_CASE("encode_document counts and metadata") {
  Vocabulary vocab({"big", "cats", "ran"});
  MetadataSchema none;
  MetadataLevels no_levels;
  auto doc = encode_document("d", {"big", "big", "ran", "unknown"}, vocab, {}, none, no_levels);
  CHECK(doc.counts == std::vector<WordCount>{{0, 2}, {2, 1}});
  CHECK(doc.n_tokens == 3);
  CHECK(!doc.label);
  CHECK(doc.covariates.empty());
  CHECK_THROWS_AS(encode_document("d", {"unknown"}, vocab, {}, none, no_levels), EmptyDocumentError);

  MetadataSchema schema;
  schema.label_field = "tone";
  schema.covariate_fields = MetadataSchema::parse_covariate_fields("year,score:real");
  std::vector<nlohmann::json> recs = {{{"tone", "anti"}, {"year", 1999}, {"score", 0.5}},
                                      {{"tone", "pro"}, {"year", "2000"}, {"score", 2}}};
  auto levels = fit_metadata(recs, schema);
  CHECK(levels.label_names == Tokens{"anti", "pro"});
  CHECK(levels.covariate_names == Tokens{"year=1999", "year=2000", "score"});
  auto enc = encode_document("x", {"cats"}, vocab, recs[1], schema, levels);
  CHECK(enc.label == 1);  // one-hot [0, 1]
  CHECK(enc.covariates == std::vector<double>{0.0, 1.0, 2.0});
}

TEST_CASE("missing schema fields are named in the error") {
  MetadataSchema schema;
  schema.label_field = "tone";
  std::vector<nlohmann::json> recs = {{{"tone", "pro"}}, {{"year", 1}}};
  try {
    fit_metadata(recs, schema);
    FAIL("expected an error");
  } catch (const CorpusError& e) {
    CHECK(std::string(e.what()).find("'tone'") != std::string::npos);
  }
  schema.label_field.reset();
  schema.covariate_fields = {{"score", CovariateEncoding::kReal}};
  std::vector<nlohmann::json> bad = {{{"score", "high"}}};
  CHECK_THROWS_AS(fit_metadata(bad, schema), CorpusError);
  CHECK_THROWS_AS(MetadataSchema::parse_covariate_fields("year:log"), CorpusError);
}

TEST_CASE("split sizes use largest remainders") {
  CHECK(split_sizes(10, {0.8, 0.1, 0.1}) == std::vector<std::size_t>{8, 1, 1});
  CHECK(split_sizes(7, {0.5, 0.25, 0.25}) == std::vector<std::size_t>{3, 2, 2});
  CHECK(split_sizes(100, {0.6, 0.2, 0.2}) == std::vector<std::size_t>{60, 20, 20});
  CHECK_THROWS_AS(split_sizes(10, {0.5, 0.5, 0.0}), CorpusError);
  CHECK_THROWS_AS(split_sizes(10, {0.5, 0.3, 0.3}), CorpusError);
  CHECK_THROWS_AS(split_sizes(2, {0.8, 0.1, 0.1}), CorpusError);
}

TEST_CASE("split_corpus is a deterministic disjoint cover") {
  Rng rng(1);
  auto corpus = random_corpus(rng, 10, 12, 2, 3);
  auto a = split_corpus(corpus, {0.8, 0.1, 0.1}, 7);
  auto b = split_corpus(corpus, {0.8, 0.1, 0.1}, 7);
  CHECK(a.train.num_docs() == 8);
  CHECK(a.dev.num_docs() == 1);
  CHECK(a.test.num_docs() == 1);
  CHECK(a.train.documents == b.train.documents);
  CHECK(a.test.documents == b.test.documents);
  Tokens ids;
  for (const auto* part : {&a.train, &a.dev, &a.test}) {
    CHECK(part->vocabulary == corpus.vocabulary);
    for (const auto& d : part->documents) ids.push_back(d.id);
  }
  std::sort(ids.begin(), ids.end());
  CHECK(std::adjacent_find(ids.begin(), ids.end()) == ids.end());
  CHECK(ids.size() == 10);
  auto c = split_corpus(corpus, {0.8, 0.1, 0.1}, 8);
  CHECK((c.test.documents != a.test.documents || c.dev.documents != a.dev.documents));
}

TEST_CASE("corpus directory round trip") {
  Rng rng(3);
  auto corpus = random_corpus(rng, 25, 40, 3, 4);
  corpus.documents[4].label.reset();
  corpus.documents[7].covariates[1] = 0.1 + 0.2;  // needs all 17 digits
  corpus.schema.label_field = "y";
  corpus.seed = 99;
  TempDir dir("roundtrip");
  save_corpus(corpus, dir.path());
  for (const char* f : {"vocab.txt", "counts.txt", "labels.tsv", "covariates.tsv", "manifest.json"}) {
    CHECK(std::filesystem::exists(dir / f));
  }
  const auto loaded = load_corpus(dir.path());
  CHECK(loaded.vocabulary == corpus.vocabulary);
  CHECK(loaded.documents == corpus.documents);
  CHECK(loaded.label_names == corpus.label_names);
  CHECK(loaded.covariate_names == corpus.covariate_names);
  CHECK(loaded.schema == corpus.schema);
  CHECK(loaded.seed == 99);
  auto manifest = nlohmann::json::parse(read_file(dir / "manifest.json"));
  CHECK(manifest["V"] == 40);
  CHECK(manifest["D"] == 25);
  CHECK(manifest["L"] == 4);
  CHECK(manifest["C"] == 3);
}

TEST_CASE("corrupt corpus directories are rejected") {
  Rng rng(4);
  auto corpus = random_corpus(rng, 5, 8);
  TempDir dir("corrupt");
  save_corpus(corpus, dir.path());
  std::ofstream(dir / "counts.txt", std::ios::app) << "0 99 1\n";
  CHECK_THROWS_AS(load_corpus(dir.path()), CorpusError);
  save_corpus(corpus, dir.path());
  std::ofstream(dir / "vocab.txt", std::ios::app) << "extra\n";
  CHECK_THROWS_AS(load_corpus(dir.path()), CorpusError);
  CHECK_THROWS_AS(load_corpus(dir / "nowhere"), CorpusError);
}

TEST_CASE("preprocess builds vocabulary, metadata and drops empty documents") {
  PreprocessOptions opt;
  opt.vocab_size = 5;
  opt.schema.label_field = "tone";
  opt.schema.covariate_fields = MetadataSchema::parse_covariate_fields("year");
  auto result = preprocess(mini_records(), opt);
  const auto& c = result.corpus;
  // df: economy 3, visa 3, border 2, court 2, jobs 2, tax 2 -> alphabetical among ties
  CHECK(c.vocabulary.words() == Tokens{"economy", "visa", "border", "court", "jobs"});
  CHECK(result.dropped_ids == Tokens{"d"});
  CHECK(c.num_docs() == 5);
  CHECK(c.label_names == Tokens{"anti", "pro"});
  CHECK(c.covariate_names == Tokens{"year=2001", "year=2002", "year=2003"});
  CHECK(c.covariates_categorical());
  CHECK(c.documents[0].n_tokens == 2);  // "tax" fell outside the vocabulary
  for (const auto& d : c.documents) {
    int sum = 0;
    for (const auto& wc : d.counts) sum += wc.count;
    CHECK(sum == d.n_tokens);
  }
  c.validate();
}

TEST_CASE("preprocess output is byte-identical across runs") {
  TempDir dir("golden");
  PreprocessOptions opt;
  opt.schema.label_field = "tone";
  save_corpus(preprocess(mini_records(), opt).corpus, dir / "one");
  save_corpus(preprocess(mini_records(), opt).corpus, dir / "two");
  for (const char* f : {"vocab.txt", "counts.txt", "labels.tsv", "covariates.tsv", "manifest.json"}) {
    CHECK(read_file(dir / "one" / f) == read_file(dir / "two" / f));
  }
  CHECK(read_file(dir / "one" / "vocab.txt") == "economy\nvisa\nborder\ncourt\njobs\ntax\nzzzz\n");
}

TEST_CASE("read_jsonl accepts text or tokens") {
  TempDir dir("jsonl");
  std::ofstream(dir / "in.jsonl") << R"({"id": "x1", "text": "The big cats ran.", "tone": "pro"})"
                                  << "\n\n"
                                  << R"({"tokens": ["Keep", "as", "is"]})" << "\n";
  auto recs = read_jsonl(dir / "in.jsonl");
  REQUIRE(recs.size() == 2);
  CHECK(recs[0].id == "x1");
  CHECK(recs[0].tokens == Tokens{"big", "cats", "ran"});
  CHECK(recs[0].metadata["tone"] == "pro");
  CHECK(recs[1].id == "1");
  CHECK(recs[1].tokens == Tokens{"Keep", "as", "is"});
  std::ofstream(dir / "bad.jsonl") << "{\"id\": 1}\n";
  CHECK_THROWS_AS(read_jsonl(dir / "bad.jsonl"), CorpusError);
  std::ofstream(dir / "broken.jsonl") << "{not json\n";
  CHECK_THROWS_AS(read_jsonl(dir / "broken.jsonl"), CorpusError);
}
