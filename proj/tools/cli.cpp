#include "cli.hpp"

#include "metatopic/checkpoint.hpp"
#include "metatopic/corpus.hpp"
#include "metatopic/eval.hpp"
#include "metatopic/infer.hpp"
#include "metatopic/synthetic.hpp"
#include "metatopic/train.hpp"

#include <CLI11.hpp>

#include <algorithm>
#include <fstream>
#include <iostream>
#include <map>
#include <set>
#include <sstream>

namespace metatopic {
namespace {

namespace fs = std::filesystem;

class UsageError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

StopwordList stopwords_from(const std::string& path) {
  return path.empty() ? StopwordList::english() : StopwordList::from_file(path);
}

PredictionMode mode_arg(const std::string& text) {
  try {
    return parse_prediction_mode(text);
  } catch (const std::invalid_argument& e) {
    throw UsageError(e.what());
  }
}

std::string on_off(bool b) { return b ? "on" : "off"; }

std::vector<std::string> split_list(const std::string& text) {
  std::vector<std::string> out;
  std::stringstream ss(text);
  std::string item;
  while (std::getline(ss, item, ',')) {
    if (!item.empty()) out.push_back(item);
  }
  return out;
}

SplitFractions parse_fractions(const std::string& text) {
  const auto parts = split_list(text);
  if (parts.size() != 3) throw UsageError("--split expects three comma-separated fractions");
  SplitFractions f;
  try {
    f.train = std::stod(parts[0]);
    f.dev = std::stod(parts[1]);
    f.test = std::stod(parts[2]);
  } catch (const std::exception&) {
    throw UsageError("--split expects numbers, got '" + text + "'");
  }
  return f;
}

void print_summary(std::ostream& out, const std::string& name, const Corpus& c) {
  out << name << ": V=" << c.vocab_size() << " D=" << c.num_docs() << " L=" << c.num_labels()
      << " C=" << c.num_covariates() << '\n';
}

// ---- preprocess -----------------------------------------------------------

struct PreprocessArgs {
  std::string input;
  std::string test_input;
  std::string output;
  std::size_t vocab_size = 2000;
  std::string label_field;
  std::string covariate_fields;
  std::string stopwords;
  std::string split;
  double dev_fraction = 0.0;
  std::uint64_t seed = 0;
};

void cmd_preprocess(const PreprocessArgs& a, std::ostream& out, std::ostream& err) {
  if (!a.split.empty() && !a.test_input.empty()) {
    throw UsageError("--split and --test-input are mutually exclusive");
  }
  if (a.dev_fraction < 0.0 || a.dev_fraction >= 1.0) {
    throw UsageError("--dev-fraction must lie in [0, 1)");
  }
  const auto stop = stopwords_from(a.stopwords);
  auto records = read_jsonl(a.input, stop);
  std::size_t num_train_records = records.size();
  if (!a.test_input.empty()) {
    auto test = read_jsonl(a.test_input, stop);
    records.insert(records.end(), std::make_move_iterator(test.begin()),
                   std::make_move_iterator(test.end()));
  }
  PreprocessOptions opt;
  opt.vocab_size = a.vocab_size;
  opt.seed = a.seed;
  if (!a.label_field.empty()) opt.schema.label_field = a.label_field;
  opt.schema.covariate_fields = MetadataSchema::parse_covariate_fields(a.covariate_fields);
  auto result = preprocess(records, opt);
  for (const auto& id : result.dropped_ids) {
    err << "warning: dropped document " << id << " (no in-vocabulary tokens)\n";
  }
  const Corpus& corpus = result.corpus;
  const fs::path dir(a.output);
  if (!a.test_input.empty()) {
    // Records were concatenated train-first; dropped ids shift the boundary.
    std::set<std::string> dropped(result.dropped_ids.begin(), result.dropped_ids.end());
    std::size_t kept_train = 0;
    for (std::size_t i = 0; i < num_train_records; ++i) kept_train += !dropped.count(records[i].id);
    std::vector<std::size_t> train_idx, test_idx;
    for (std::size_t i = 0; i < corpus.num_docs(); ++i) {
      (i < kept_train ? train_idx : test_idx).push_back(i);
    }
    Corpus train = corpus.subset(train_idx);
    const Corpus test = corpus.subset(test_idx);
    if (a.dev_fraction > 0.0) {
      auto parts = split_corpus(train, {1.0 - a.dev_fraction, a.dev_fraction, 0.0}, a.seed);
      save_corpus(parts.dev, dir / "dev");
      print_summary(out, "dev", parts.dev);
      train = std::move(parts.train);
    }
    save_corpus(train, dir / "train");
    save_corpus(test, dir / "test");
    print_summary(out, "train", train);
    print_summary(out, "test", test);
  } else if (!a.split.empty()) {
    auto parts = split_corpus(corpus, parse_fractions(a.split), a.seed);
    save_corpus(parts.train, dir / "train");
    save_corpus(parts.dev, dir / "dev");
    save_corpus(parts.test, dir / "test");
    print_summary(out, "train", parts.train);
    print_summary(out, "dev", parts.dev);
    print_summary(out, "test", parts.test);
  } else {
    save_corpus(corpus, dir);
    print_summary(out, "corpus", corpus);
  }
}

// ---- train ----------------------------------------------------------------

struct TrainArgs {
  std::string input;
  std::string dev;
  std::string output;
  std::string history;
  std::string word_vectors;
  std::string sparsity_targets = "topics,covariates,interactions";
  std::string precision = "f64";
  bool verbose = false;
  TrainConfig config;
};

void cmd_train(TrainArgs a, std::ostream& out) {
  if (a.config.use_interactions && !a.config.use_covariates) {
    throw UsageError("--interactions requires --covariates");
  }
  if (a.config.covariate_embedding_dim > 0 && !a.config.use_covariates) {
    throw UsageError("--embed-covariates requires --covariates");
  }
  if (a.precision != "f64" && a.precision != "f32") {
    throw UsageError("--precision must be f64 or f32");
  }
  auto& c = a.config;
  c.precision = a.precision == "f32" ? Precision::kFloat32 : Precision::kFloat64;
  c.sparsity_targets = SparsityTargets::parse(a.sparsity_targets);
  if (!a.word_vectors.empty()) c.word_vector_path = a.word_vectors;
  try {
    c.validate();
  } catch (const std::invalid_argument& e) {
    throw UsageError(e.what());
  }

  const Corpus corpus = load_corpus(a.input);
  std::optional<Corpus> dev;
  if (!a.dev.empty()) dev = load_corpus(a.dev);

  out << "train: k=" << c.num_topics << " alpha=" << format_real(c.alpha)
      << " epochs=" << c.epochs << " lr=" << format_real(c.learning_rate)
      << " batch_size=" << c.batch_size << " beta1=" << format_real(c.adam_beta1)
      << " samples=" << c.train_samples << " seed=" << c.seed
      << " covariates=" << on_off(c.use_covariates) << " labels=" << on_off(c.use_labels)
      << " interactions=" << on_off(c.use_interactions)
      << " background=" << on_off(c.use_background) << " sparsity=" << on_off(c.sparsity_enabled)
      << '\n';
  EpochCallback progress;
  if (a.verbose) {
    progress = [&](const EpochRecord& r) {
      out << "epoch " << r.epoch << " train_elbo=" << format_real(r.train_elbo);
      if (r.dev_elbo) out << " dev_elbo=" << format_real(*r.dev_elbo);
      if (r.dev_accuracy) out << " dev_accuracy=" << format_real(*r.dev_accuracy);
      out << '\n';
    };
  }
  auto result = train(corpus, dev ? &*dev : nullptr, c, progress);
  save_checkpoint(result.model, a.output);
  const fs::path history = a.history.empty() ? fs::path(a.output + ".history.tsv") : fs::path(a.history);
  write_history_tsv(history, result.history);
  out << "checkpoint: " << a.output << " (epoch " << result.selected_epoch << ")\n";
  out << "history: " << history.string() << '\n';
}

// ---- eval -----------------------------------------------------------------

struct EvalArgs {
  std::string checkpoint;
  std::string input;
  std::string output;
  std::string reference;
  std::string stopwords;
  std::string metrics = "auto";
  std::string mode = "joint";
  int samples = 20;
  std::uint64_t seed = 0;
  double sparsity_threshold = 1e-3;
  std::size_t top_words = 10;
  bool include_label_term = false;
};

bool index_file(const fs::path& path) {
  std::ifstream in(path, std::ios::binary);
  char magic[8] = {};
  in.read(magic, sizeof(magic));
  return in && std::string(magic, 7) == "MTPCOOC";
}

CooccurrenceIndex reference_index(const std::string& path, const Vocabulary& vocab,
                                  const StopwordList& stop) {
  if (index_file(path)) {
    auto index = CooccurrenceIndex::load(path);
    return index;
  }
  std::vector<std::vector<std::string>> docs;
  for (auto& rec : read_jsonl(path, stop)) docs.push_back(std::move(rec.tokens));
  return build_cooccurrence(docs, vocab);
}

void cmd_eval(const EvalArgs& a, std::ostream& out) {
  static const std::set<std::string> known = {"perplexity", "npmi_internal", "npmi_external",
                                              "sparsity", "accuracy"};
  const bool automatic = a.metrics == "auto";
  std::set<std::string> wanted;
  for (const auto& m : split_list(a.metrics)) {
    if (m == "auto") continue;
    if (!known.count(m)) throw UsageError("unknown metric '" + m + "'");
    wanted.insert(m);
  }
  if (wanted.count("npmi_external") && a.reference.empty()) {
    throw UsageError("npmi_external needs --reference-corpus");
  }
  const auto mode = mode_arg(a.mode);
  const auto model = load_checkpoint(a.checkpoint);
  const auto corpus = load_corpus(a.input);
  model.check_corpus(corpus);

  const bool can_predict = mode == PredictionMode::kJointLabel
                               ? model.config.use_labels()
                               : model.config.use_covariates() && model.config.covariates_categorical;
  if (automatic) {
    wanted = {"perplexity", "npmi_internal", "sparsity"};
    if (!a.reference.empty()) wanted.insert("npmi_external");
    if (can_predict && (corpus.has_labels() || mode == PredictionMode::kConditionalCovariate)) {
      wanted.insert("accuracy");
    }
  }

  EvalMetrics metrics;
  const auto report = top_words(model, a.top_words);
  if (wanted.count("perplexity")) {
    PerplexityOptions po;
    po.samples = a.samples;
    po.seed = a.seed;
    po.include_label_term = a.include_label_term;
    metrics.perplexity = perplexity(model, corpus, po).bound;
  }
  if (wanted.count("npmi_internal")) {
    auto r = npmi(report, build_cooccurrence(corpus));
    metrics.npmi_internal = r.mean;
    metrics.npmi_internal_unclamped = r.mean_unclamped;
  }
  if (wanted.count("npmi_external")) {
    auto r = npmi(report, reference_index(a.reference, model.vocabulary, stopwords_from(a.stopwords)));
    metrics.npmi_external = r.mean;
    metrics.npmi_external_unclamped = r.mean_unclamped;
  }
  if (wanted.count("sparsity")) metrics.sparsity = sparsity_fraction(model.params, a.sparsity_threshold);
  if (wanted.count("accuracy")) {
    if (!can_predict) throw std::invalid_argument("the checkpoint cannot predict in this mode");
    const auto predictions = predict_labels(model, corpus, mode);
    const auto gold = gold_classes(model, corpus, mode);
    std::vector<int> p, g;
    std::map<int, std::size_t> freq;
    for (std::size_t d = 0; d < gold.size(); ++d) {
      if (!gold[d]) continue;
      p.push_back(predictions[d].label);
      g.push_back(*gold[d]);
      ++freq[*gold[d]];
    }
    if (g.empty()) throw std::invalid_argument("no gold labels in the evaluation corpus");
    metrics.accuracy = accuracy(p, g);
    std::size_t top = 0;
    for (const auto& [label, n] : freq) top = std::max(top, n);
    metrics.majority_baseline = static_cast<double>(top) / static_cast<double>(g.size());
  }

  const fs::path dir(a.output);
  fs::create_directories(dir);
  write_metrics_json(dir / "metrics.json", metrics);
  write_topic_tsv(dir / "topics.tsv", report);
  out << metrics.to_json().dump() << '\n';
}

// ---- predict --------------------------------------------------------------

struct PredictArgs {
  std::string checkpoint;
  std::string input;
  std::string output;
  std::string theta;
  std::string mode = "joint";
  bool sampled_theta = false;
  int samples = 20;
  std::uint64_t seed = 0;
};

void cmd_predict(const PredictArgs& a, std::ostream& out) {
  const auto mode = mode_arg(a.mode);
  const auto model = load_checkpoint(a.checkpoint);
  const auto corpus = load_corpus(a.input);
  if (a.output.empty() && a.theta.empty()) throw UsageError("nothing to write: give --output or --theta");
  if (!a.output.empty()) {
    const auto predictions = predict_labels(model, corpus, mode);
    write_predictions_tsv(a.output, corpus, predictions, prediction_class_names(model, mode));
    out << "predictions: " << a.output << '\n';
  }
  if (!a.theta.empty()) {
    ThetaOptions to;
    to.sampled = a.sampled_theta;
    to.samples = a.samples;
    to.seed = a.seed;
    write_theta_tsv(a.theta, corpus, infer_theta(model, corpus, to));
    out << "theta: " << a.theta << '\n';
  }
}

// ---- export-embeddings ----------------------------------------------------

struct ExportArgs {
  std::string checkpoint;
  std::string output;
  std::string svg;
  std::size_t top_words = 10;
};

std::string xml_escape(const std::string& s) {
  std::string out;
  for (char ch : s) {
    switch (ch) {
      case '&': out += "&amp;"; break;
      case '<': out += "&lt;"; break;
      case '>': out += "&gt;"; break;
      case '"': out += "&quot;"; break;
      default: out += ch;
    }
  }
  return out;
}

void write_svg(const fs::path& path, const std::vector<std::string>& names, const Matrix& coords) {
  constexpr double kSize = 480, kMargin = 48;
  Eigen::Index dx = 0, dy = coords.cols() > 1 ? 1 : 0;
  const double x0 = coords.col(dx).minCoeff(), x1 = coords.col(dx).maxCoeff();
  const double y0 = coords.col(dy).minCoeff(), y1 = coords.col(dy).maxCoeff();
  auto scale = [&](double v, double lo, double hi) {
    return hi > lo ? (v - lo) / (hi - lo) : 0.5;
  };
  std::ofstream out(path);
  if (!out) throw std::runtime_error("cannot write " + path.string());
  out << "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"" << kSize << "\" height=\"" << kSize
      << "\" viewBox=\"0 0 " << kSize << ' ' << kSize << "\">\n";
  out << "<rect width=\"100%\" height=\"100%\" fill=\"white\"/>\n";
  out << "<g font-family=\"sans-serif\" font-size=\"11\">\n";
  for (Eigen::Index i = 0; i < coords.rows(); ++i) {
    const double px = kMargin + scale(coords(i, dx), x0, x1) * (kSize - 2 * kMargin);
    const double py = kSize - kMargin - scale(coords(i, dy), y0, y1) * (kSize - 2 * kMargin);
    out << "<circle cx=\"" << format_real(px) << "\" cy=\"" << format_real(py)
        << "\" r=\"3\" fill=\"black\"/>";
    out << "<text x=\"" << format_real(px + 5) << "\" y=\"" << format_real(py - 5) << "\">"
        << xml_escape(names[static_cast<std::size_t>(i)]) << "</text>\n";
  }
  out << "</g>\n</svg>\n";
}

void cmd_export_embeddings(const ExportArgs& a, std::ostream& out) {
  const auto model = load_checkpoint(a.checkpoint);
  if (!model.config.projects_covariates()) {
    throw std::invalid_argument("checkpoint has no covariate embedding (train with --embed-covariates)");
  }
  const Matrix& proj = model.params.covariate_projection;  // C x C'
  const Matrix& dev = model.params.covariate_deviations;  // C' x V
  const auto names = model.covariate_names;
  std::ofstream tsv(a.output);
  if (!tsv) throw std::runtime_error("cannot write " + a.output);
  tsv << "covariate";
  for (Eigen::Index j = 0; j < proj.cols(); ++j) tsv << "\tdim_" << j + 1;
  tsv << "\ttop_words\n";
  for (Eigen::Index c = 0; c < proj.rows(); ++c) {
    tsv << names[static_cast<std::size_t>(c)];
    for (Eigen::Index j = 0; j < proj.cols(); ++j) tsv << '\t' << format_real(proj(c, j));
    const Eigen::RowVectorXd deviation = proj.row(c) * dev;
    const auto top = top_words_of_row(deviation, model.vocabulary, a.top_words);
    tsv << '\t';
    for (std::size_t r = 0; r < top.words.size(); ++r) tsv << (r ? " " : "") << top.words[r];
    tsv << '\n';
  }
  const fs::path dims_path = fs::path(a.output).replace_extension(".dims.tsv");
  std::ofstream dims(dims_path);
  if (!dims) throw std::runtime_error("cannot write " + dims_path.string());
  dims << "dimension\tdirection\trank\tword\tweight\n";
  for (Eigen::Index j = 0; j < dev.rows(); ++j) {
    for (int sign : {1, -1}) {
      const Eigen::RowVectorXd row = sign * dev.row(j);
      const auto top = top_words_of_row(row, model.vocabulary, a.top_words);
      for (std::size_t r = 0; r < top.words.size(); ++r) {
        dims << j + 1 << '\t' << (sign > 0 ? '+' : '-') << '\t' << r + 1 << '\t' << top.words[r]
             << '\t' << format_real(sign * top.weights[r]) << '\n';
      }
    }
  }
  if (!a.svg.empty()) write_svg(a.svg, names, proj);
  out << "embeddings: " << a.output << " (" << proj.rows() << " values, " << proj.cols()
      << " dimensions)\n";
}

// ---- build-index ----------------------------------------------------------

struct IndexArgs {
  std::string input;
  std::string output;
  std::string checkpoint;
  std::string vocab_from;
  std::string stopwords;
};

void cmd_build_index(const IndexArgs& a, std::ostream& out) {
  if (a.checkpoint.empty() == a.vocab_from.empty()) {
    throw UsageError("give exactly one of --checkpoint or --vocab-from");
  }
  const Vocabulary vocab = a.checkpoint.empty() ? load_corpus(a.vocab_from).vocabulary
                                                : load_checkpoint(a.checkpoint).vocabulary;
  const auto stop = stopwords_from(a.stopwords);
  CooccurrenceIndex index(vocab.words());
  for (const auto& rec : read_jsonl(a.input, stop)) index.add_document(rec.tokens);
  index.save(a.output);
  out << "index: " << a.output << " (" << index.doc_count() << " documents, "
      << index.num_pairs() << " pairs)\n";
}

// ---- generate -------------------------------------------------------------

struct GenerateArgs {
  std::string output;
  SyntheticSpec spec;
};

void cmd_generate(const GenerateArgs& a, std::ostream& out) {
  const auto data = generate_synthetic(a.spec);
  write_synthetic_jsonl(data, a.output);
  out << "generated: " << a.output << " (" << data.documents.size() << " documents)\n";
}

CLI::Option* add_switch(CLI::App* app, const std::string& name, bool& target, const std::string& help) {
  return app->add_flag(name, target, help + " [" + (target ? "on" : "off") + "]");
}

}  // namespace

int run_cli(const std::vector<std::string>& args, std::ostream& out, std::ostream& err) {
  CLI::App app{"Neural topic models with document metadata.", "metatopic"};
  app.require_subcommand(1);
  app.option_defaults()->always_capture_default();
  app.get_formatter()->column_width(34);

  PreprocessArgs pre;
  auto* sp = app.add_subcommand("preprocess", "Tokenize JSON-lines documents into a corpus directory");
  sp->add_option("--input", pre.input, "JSON-lines input")->required()->check(CLI::ExistingFile);
  sp->add_option("--output", pre.output, "Output corpus directory")->required();
  sp->add_option("--test-input", pre.test_input, "Held-out JSON-lines sharing the vocabulary")
      ->check(CLI::ExistingFile);
  sp->add_option("--vocab-size", pre.vocab_size, "Maximum vocabulary size")->check(CLI::PositiveNumber);
  sp->add_option("--label-field", pre.label_field, "Metadata field holding the label");
  sp->add_option("--covariate-fields", pre.covariate_fields,
                 "Comma-separated covariate fields (name or name:real)");
  sp->add_option("--stopwords", pre.stopwords, "Stopword file (default: shipped English list)");
  sp->add_option("--split", pre.split, "Write train/dev/test splits with these fractions");
  sp->add_option("--dev-fraction", pre.dev_fraction,
                 "With --test-input, fraction of training documents held out as dev");
  sp->add_option("--seed", pre.seed, "Seed for splitting");

  TrainArgs tr;
  auto& tc = tr.config;
  auto* st = app.add_subcommand("train", "Train a model on a corpus directory");
  st->add_option("--input", tr.input, "Training corpus directory")->required()->check(CLI::ExistingDirectory);
  st->add_option("--output", tr.output, "Checkpoint path")->required();
  st->add_option("--dev", tr.dev, "Dev corpus directory (epoch selection, history)")
      ->check(CLI::ExistingDirectory);
  st->add_option("--history", tr.history, "History TSV (default: <output>.history.tsv)");
  st->add_option("--k", tc.num_topics, "Number of topics");
  st->add_option("--alpha", tc.alpha, "Dirichlet hyperparameter of the prior");
  st->add_option("--epochs", tc.epochs, "Training epochs");
  st->add_option("--lr", tc.learning_rate, "Adam learning rate");
  st->add_option("--batch-size", tc.batch_size, "Minibatch size");
  st->add_option("--beta1", tc.adam_beta1, "Adam first-moment decay");
  st->add_option("--beta2", tc.adam_beta2, "Adam second-moment decay");
  st->add_option("--seed", tc.seed, "Random seed");
  st->add_option("--samples", tc.train_samples, "Noise samples per document and step");
  st->add_option("--embedding-dim", tc.embedding_dim, "Encoder embedding width");
  st->add_option("--word-vectors", tr.word_vectors, "Word vectors (text: word v1 ... vE)")
      ->check(CLI::ExistingFile);
  add_switch(st, "--freeze-word-vectors", tc.freeze_word_vectors, "Keep loaded word vectors fixed");
  st->add_flag_callback("--no-freeze-word-vectors", [&tc] { tc.freeze_word_vectors = false; },
                        "Fine-tune loaded word vectors");
  add_switch(st, "--covariates", tc.use_covariates, "Use the corpus covariates");
  add_switch(st, "--labels", tc.use_labels, "Use the corpus labels");
  add_switch(st, "--interactions", tc.use_interactions, "Add topic-covariate interactions");
  st->add_flag_callback("--no-background", [&tc] { tc.use_background = false; },
                        "Drop the background term [background on]");
  add_switch(st, "--freeze-background", tc.freeze_background, "Keep the background fixed");
  st->add_option("--embed-covariates", tc.covariate_embedding_dim,
                 "Project covariates to a learned embedding of this width (0: off)");
  st->add_option("--label-hidden", tc.label_hidden, "Label head hidden width (0: number of topics)");
  add_switch(st, "--sparsity", tc.sparsity_enabled, "Sparsity-inducing prior on deviations");
  st->add_option("--sparsity-targets", tr.sparsity_targets,
                 "Penalized matrices: topics,covariates,interactions");
  st->add_option("--sparsity-threshold", tc.sparsity_threshold, "Zero threshold for the history column");
  st->add_option("--precision", tr.precision, "Training arithmetic: f64 or f32");
  add_switch(st, "--verbose", tr.verbose, "Print one line per epoch");

  EvalArgs ev;
  auto* se = app.add_subcommand("eval", "Evaluate a checkpoint on a corpus directory");
  se->add_option("--checkpoint", ev.checkpoint, "Checkpoint path")->required()->check(CLI::ExistingFile);
  se->add_option("--input", ev.input, "Evaluation corpus directory")->required()->check(CLI::ExistingDirectory);
  se->add_option("--output", ev.output, "Directory for metrics.json and topics.tsv")->required();
  se->add_option("--reference-corpus", ev.reference,
                 "External NPMI reference: JSON-lines or a built index")
      ->check(CLI::ExistingFile);
  se->add_option("--metrics", ev.metrics,
                 "auto or a list of perplexity,npmi_internal,npmi_external,sparsity,accuracy");
  se->add_option("--mode", ev.mode, "Prediction rule for accuracy: joint or conditional");
  se->add_option("--samples", ev.samples, "Noise samples per document for perplexity");
  se->add_option("--seed", ev.seed, "Seed for perplexity noise");
  se->add_option("--sparsity-threshold", ev.sparsity_threshold, "Entries below this count as zero");
  se->add_option("--top-words", ev.top_words, "Words per topic");
  add_switch(se, "--include-label-term", ev.include_label_term, "Add the label likelihood to perplexity");
  se->add_option("--stopwords", ev.stopwords, "Stopword file for a JSON-lines reference");

  PredictArgs pr;
  auto* sr = app.add_subcommand("predict", "Predict labels and topic proportions");
  sr->add_option("--checkpoint", pr.checkpoint, "Checkpoint path")->required()->check(CLI::ExistingFile);
  sr->add_option("--input", pr.input, "Corpus directory")->required()->check(CLI::ExistingDirectory);
  sr->add_option("--output", pr.output, "Predictions TSV");
  sr->add_option("--theta", pr.theta, "Topic proportions TSV");
  sr->add_option("--mode", pr.mode, "joint or conditional");
  add_switch(sr, "--sampled-theta", pr.sampled_theta, "Average softmax over samples instead of softmax(mu)");
  sr->add_option("--samples", pr.samples, "Samples for --sampled-theta");
  sr->add_option("--seed", pr.seed, "Seed for --sampled-theta");

  ExportArgs ex;
  auto* sx = app.add_subcommand("export-embeddings", "Write learned covariate embeddings");
  sx->add_option("--checkpoint", ex.checkpoint, "Checkpoint path")->required()->check(CLI::ExistingFile);
  sx->add_option("--output", ex.output, "Embedding TSV")->required();
  sx->add_option("--svg", ex.svg, "Optional SVG scatter of the first two dimensions");
  sx->add_option("--top-words", ex.top_words, "Deviation words per row and dimension");

  IndexArgs ix;
  auto* si = app.add_subcommand("build-index", "Build a co-occurrence index for external NPMI");
  si->add_option("--input", ix.input, "Reference JSON-lines")->required()->check(CLI::ExistingFile);
  si->add_option("--output", ix.output, "Index path")->required();
  si->add_option("--checkpoint", ix.checkpoint, "Take the vocabulary from a checkpoint");
  si->add_option("--vocab-from", ix.vocab_from, "Take the vocabulary from a corpus directory");
  si->add_option("--stopwords", ix.stopwords, "Stopword file");

  GenerateArgs gn;
  auto* sg = app.add_subcommand("generate", "Sample a synthetic JSON-lines corpus");
  sg->add_option("--output", gn.output, "JSON-lines path")->required();
  sg->add_option("--docs", gn.spec.num_docs, "Documents");
  sg->add_option("--k", gn.spec.num_topics, "Topics");
  sg->add_option("--alpha", gn.spec.alpha, "Prior hyperparameter for theta");
  sg->add_option("--covariate-values", gn.spec.covariate_values,
                 "Values of a drifting 'year' covariate (0: none)");
  add_switch(sg, "--labels", gn.spec.labels, "Add a 'label' field (dominant topic)");
  sg->add_option("--label-noise", gn.spec.label_noise, "Probability of a random label");
  sg->add_option("--seed", gn.spec.seed, "Random seed");

  std::vector<std::string> reversed(args.rbegin(), args.rend());
  try {
    app.parse(reversed);
  } catch (const CLI::CallForHelp&) {
    const CLI::App* target = &app;
    for (auto* sub : app.get_subcommands()) target = sub;
    out << (target == &app ? app.help() : target->help("metatopic"));
    return 0;
  } catch (const CLI::CallForAllHelp&) {
    out << app.help("", CLI::AppFormatMode::All);
    return 0;
  } catch (const CLI::ParseError& e) {
    std::string msg = e.what();
    std::replace(msg.begin(), msg.end(), '\n', ' ');
    err << "error: " << msg << '\n';
    return 2;
  }

  try {
    if (sp->parsed()) cmd_preprocess(pre, out, err);
    if (st->parsed()) cmd_train(tr, out);
    if (se->parsed()) cmd_eval(ev, out);
    if (sr->parsed()) cmd_predict(pr, out);
    if (sx->parsed()) cmd_export_embeddings(ex, out);
    if (si->parsed()) cmd_build_index(ix, out);
    if (sg->parsed()) cmd_generate(gn, out);
  } catch (const UsageError& e) {
    err << "error: " << e.what() << '\n';
    return 2;
  } catch (const std::exception& e) {
    std::string msg = e.what();
    std::replace(msg.begin(), msg.end(), '\n', ' ');
    err << "error: " << msg << '\n';
    return 1;
  }
  return 0;
}

}  // namespace metatopic
