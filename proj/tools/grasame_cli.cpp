// grasame: data preparation, graph inspection, training, generation,
// evaluation and lambda sweeps.

#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <optional>
#include <sstream>

#include "CLI11.hpp"
#include "grasame/errors.hpp"
#include "grasame/evalgen.hpp"
#include "grasame/hiergraph.hpp"
#include "grasame/kg_ingest.hpp"
#include "grasame/model.hpp"
#include "grasame/parameter_store.hpp"
#include "grasame/run_config.hpp"
#include "grasame/synthetic.hpp"
#include "grasame/training.hpp"
#include "json.hpp"

namespace fs = std::filesystem;
using namespace grasame;

namespace {

enum ExitCode { kOk = 0, kUsage = 1, kData = 2, kRuntime = 3 };

class UsageError : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

void write_text(const fs::path& path, const std::string& text) {
  if (path.has_parent_path()) fs::create_directories(path.parent_path());
  std::ofstream out(path, std::ios::binary);
  if (!out) throw DataError("cannot write " + path.string());
  out << text;
}

std::vector<Example> read_dataset(const std::string& path, bool need_text) {
  if (path.empty()) throw UsageError("no dataset path given");
  if (!fs::exists(path)) throw DataError("dataset not found: " + path);
  auto examples = parse_dataset(path);
  if (examples.empty()) throw DataError("dataset " + path + " holds no examples");
  if (need_text) {
    for (std::size_t i = 0; i < examples.size(); ++i) {
      if (examples[i].target_text.empty()) {
        throw DataError("example " + std::to_string(i) + " of " + path + " has no \"text\"");
      }
    }
  }
  return examples;
}

nlohmann::ordered_json graph_dump(std::size_t id, const HierGraph& graph) {
  nlohmann::ordered_json j;
  j["input_id"] = id;
  j["num_nodes"] = graph.num_nodes;
  j["edges"] = nlohmann::ordered_json::array();
  for (const Edge& e : graph.edges) {
    j["edges"].push_back({e.src, e.dst, relation_name(e.rel), direction_name(e.dir)});
  }
  return j;
}

// ---------------------------------------------------------------------------

struct BuildGraphArgs {
  std::string data, out;
  bool unidirectional = false;
};

int run_build_graph(const BuildGraphArgs& args) {
  const auto examples = read_dataset(args.data, false);
  const Vocabulary vocab = build_vocabulary(examples, 1);
  std::string lines;
  EdgeCounts totals;
  std::size_t directed = 0, forward = 0;
  for (std::size_t i = 0; i < examples.size(); ++i) {
    const HierGraph graph = build_graph(linearize(examples[i], vocab), !args.unidirectional);
    lines += graph_dump(i, graph).dump() + "\n";
    const EdgeCounts c = edge_counts(graph);
    for (std::size_t r = 0; r < kNumRelations; ++r) {
      totals.total[r] += c.total[r];
      totals.forward[r] += c.forward[r];
      totals.reverse[r] += c.reverse[r];
    }
    directed += c.directed_non_self();
    forward += graph.forward_edges.size();
  }
  write_text(args.out, lines);
  nlohmann::ordered_json stats;
  stats["num_examples"] = examples.size();
  stats["bidirectional"] = !args.unidirectional;
  stats["directed_non_self_edges"] = directed;
  stats["forward_non_self_edges"] = forward;
  for (std::size_t r = 0; r < kNumRelations; ++r) {
    stats["relations"][relation_name(static_cast<Relation>(r))] = {
        {"total", totals.total[r]}, {"forward", totals.forward[r]}, {"reverse", totals.reverse[r]}};
  }
  std::cout << stats.dump(2) << "\n";
  return kOk;
}

// ---------------------------------------------------------------------------

struct TrainArgs {
  std::string config;
  std::optional<std::string> variation, gnn, data, valid, out;
  bool freeze_base = false, no_gr_loss = false, unidirectional = false;
  std::optional<std::size_t> epochs, eval_every;
  std::optional<double> lr, lambda;
  std::optional<std::uint64_t> seed;
};

RunConfig resolve_train_config(const TrainArgs& args) {
  if (args.gnn && args.variation && *args.variation == "base") {
    throw UsageError("--gnn cannot be combined with --variation base");
  }
  RunConfig c = args.config.empty() ? RunConfig{} : load_config(args.config);
  if (args.variation) c.model.variation = parse_variation(*args.variation);
  if (args.gnn) {
    if (c.model.variation == Variation::kBase) {
      throw UsageError("--gnn cannot be used with the base variation");
    }
    c.model.gnn.family = parse_family(*args.gnn);
  }
  if (args.freeze_base) c.train.freeze_mode = FreezeMode::kFreezeBase;
  if (args.no_gr_loss) c.train.disable_gr_loss = true;
  if (args.unidirectional) c.train.unidirectional_edges = true;
  if (args.data) c.data.train = *args.data;
  if (args.valid) c.data.valid = *args.valid;
  if (args.out) c.output_dir = *args.out;
  if (args.epochs) c.train.epochs = *args.epochs;
  if (args.eval_every) c.train.eval_every = *args.eval_every;
  if (args.lr) c.train.lr = *args.lr;
  if (args.lambda) c.train.lambda_gr = *args.lambda;
  if (args.seed) c.train.seed = *args.seed;
  c.model.seed = c.train.seed;
  c.train.validate();
  c.decode.validate();
  return c;
}

PrepareOptions prepare_options(const RunConfig& c) {
  PrepareOptions p;
  p.linearize.prompt = c.data.prompt;
  p.linearize.max_sequence_length = c.model.max_sequence_length;
  p.bidirectional = !c.train.unidirectional_edges;
  p.max_target_length = c.model.max_target_length;
  return p;
}

struct Prepared {
  Vocabulary vocab;
  std::vector<PreparedExample> train, valid;
};

Prepared prepare_run(RunConfig& c) {
  Prepared p;
  const auto train_examples = read_dataset(c.data.train, true);
  LinearizeOptions lo;
  lo.prompt = c.data.prompt;
  lo.max_sequence_length = c.model.max_sequence_length;
  p.vocab = build_vocabulary(train_examples, c.data.min_count, lo);
  c.model.vocab_size = p.vocab.size();
  p.train = prepare_examples(train_examples, p.vocab, prepare_options(c));
  if (!c.data.valid.empty()) {
    p.valid = prepare_examples(read_dataset(c.data.valid, true), p.vocab, prepare_options(c));
  }
  return p;
}

int run_train(const TrainArgs& args) {
  RunConfig c = resolve_train_config(args);
  Prepared data = prepare_run(c);
  const fs::path dir = c.output_dir;
  fs::create_directories(dir);
  write_text(dir / "config.json", to_json(c).dump(2) + "\n");
  data.vocab.save(dir / "vocab.txt");

  Seq2SeqModel model(c.model);
  // Without a validation file the training set drives model selection.
  const auto& val = data.valid.empty() ? data.train : data.valid;
  std::ofstream metrics(dir / "metrics.jsonl", std::ios::binary);
  if (!metrics) throw DataError("cannot write " + (dir / "metrics.jsonl").string());
  const TrainResult result = train(model, data.train, val, data.vocab, c.train, [&](const EpochMetrics& m) {
    metrics << metrics_json_line(m) << "\n";
    metrics.flush();
    std::cerr << "epoch " << m.epoch << " l_total " << m.train.l_total;
    if (m.val_bleu) std::cerr << " val_bleu " << *m.val_bleu;
    std::cerr << "\n";
  });
  save_checkpoint(model.parameters(), dir / "model.ckpt");
  nlohmann::ordered_json summary;
  summary["checkpoint"] = (dir / "model.ckpt").string();
  summary["best_epoch"] = result.best_epoch;
  summary["best_val_bleu"] = result.best_val_bleu;
  summary["trainable_parameters"] = model.parameters().trainable_count();
  summary["total_parameters"] = model.parameters().total_count();
  std::cout << summary.dump() << "\n";
  return kOk;
}

// ---------------------------------------------------------------------------

struct Loaded {
  RunConfig config;
  Vocabulary vocab;
  std::optional<Seq2SeqModel> model;
};

Loaded load_run(const std::string& run_dir, const std::optional<std::string>& checkpoint) {
  const fs::path dir = run_dir;
  if (!fs::exists(dir / "config.json")) throw DataError("no config.json in run directory " + run_dir);
  Loaded l;
  l.config = load_config(dir / "config.json");
  if (!fs::exists(dir / "vocab.txt")) throw DataError("no vocab.txt in run directory " + run_dir);
  l.vocab = Vocabulary::load(dir / "vocab.txt");
  l.config.model.vocab_size = l.vocab.size();
  l.config.model.seed = l.config.train.seed;
  const fs::path ckpt = checkpoint ? fs::path(*checkpoint) : dir / "model.ckpt";
  if (!fs::exists(ckpt)) throw DataError("checkpoint not found: " + ckpt.string());
  l.model.emplace(l.config.model);
  load_checkpoint(l.model->parameters(), ckpt);
  return l;
}

struct GenerateArgs {
  std::string run, data, out;
  std::optional<std::string> checkpoint, mode;
  std::optional<std::size_t> beam;
};

int run_generate(const GenerateArgs& args) {
  Loaded l = load_run(args.run, args.checkpoint);
  DecodeConfig decode = l.config.decode;
  if (args.mode) decode.mode = parse_decode_mode(*args.mode);
  if (args.beam) decode.beam_size = *args.beam;
  decode.validate();
  const auto examples = read_dataset(args.data, false);
  PrepareOptions po = prepare_options(l.config);
  LinearizeOptions lo = po.linearize;
  std::ostringstream lines;
  for (std::size_t i = 0; i < examples.size(); ++i) {
    const TokenizedGraphInput input = linearize(examples[i], l.vocab, lo);
    const GraphAdjacency adj =
        GraphAdjacency::from(build_graph(input, po.bidirectional), l.config.model.gnn.num_relation_buckets);
    const Hypothesis hyp = decode_example(*l.model, input.tokens, &adj, decode);
    nlohmann::ordered_json j;
    j["input_id"] = i;
    j["text"] = detokenize(l.vocab.decode(hyp.text_tokens(Vocabulary::kEos)));
    j["log_prob"] = hyp.log_prob;
    lines << j.dump() << "\n";
  }
  if (args.out.empty()) {
    std::cout << lines.str();
  } else {
    write_text(args.out, lines.str());
  }
  return kOk;
}

// ---------------------------------------------------------------------------

struct EvalArgs {
  std::string predictions, data;
};

int run_eval(const EvalArgs& args) {
  if (!fs::exists(args.predictions)) throw DataError("predictions not found: " + args.predictions);
  std::ifstream in(args.predictions, std::ios::binary);
  std::map<std::size_t, std::string> texts;
  std::string line;
  std::size_t line_number = 0;
  while (std::getline(in, line)) {
    ++line_number;
    if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
    nlohmann::json j;
    try {
      j = nlohmann::json::parse(line);
      texts[j.at("input_id").get<std::size_t>()] = j.at("text").get<std::string>();
    } catch (const nlohmann::json::exception& e) {
      throw DataError("bad prediction record at line " + std::to_string(line_number) + ": " + e.what());
    }
  }
  if (texts.empty()) throw DataError("no predictions in " + args.predictions);
  const auto examples = read_dataset(args.data, true);
  if (texts.size() != examples.size() || texts.rbegin()->first != examples.size() - 1) {
    throw DataError(std::to_string(texts.size()) + " predictions for " + std::to_string(examples.size()) +
                    " references");
  }
  std::vector<std::vector<std::string>> candidates, references;
  for (std::size_t i = 0; i < examples.size(); ++i) {
    candidates.push_back(tokenize(texts[i]));
    references.push_back(tokenize(examples[i].target_text));
  }
  nlohmann::ordered_json out;
  out["bleu"] = corpus_bleu(candidates, references);
  out["chrf_pp"] = chrf_pp(candidates, references);
  out["num_examples"] = examples.size();
  std::cout << out.dump() << "\n";
  return kOk;
}

// ---------------------------------------------------------------------------

std::vector<double> parse_values(const std::string& text) {
  std::vector<double> values;
  std::stringstream ss(text);
  std::string item;
  while (std::getline(ss, item, ',')) {
    std::size_t used = 0;
    double v = 0;
    try {
      v = std::stod(item, &used);
    } catch (const std::exception&) {
      used = 0;
    }
    if (used == 0 || used != item.size() || v < 0.0) throw UsageError("bad lambda value '" + item + "'");
    values.push_back(v);
  }
  if (values.empty()) throw UsageError("--values needs at least one number");
  return values;
}

struct SweepArgs {
  TrainArgs train;
  std::string values;
};

int run_sweep(const SweepArgs& args) {
  const std::vector<double> values = parse_values(args.values);
  RunConfig c = resolve_train_config(args.train);
  Prepared data = prepare_run(c);
  const auto& val = data.valid.empty() ? data.train : data.valid;
  const fs::path dir = c.output_dir;
  fs::create_directories(dir);
  write_text(dir / "config.json", to_json(c).dump(2) + "\n");
  const auto rows = sweep_lambda(c.model, data.train, val, data.vocab, c.train, values);
  write_text(dir / "sweep.tsv", sweep_tsv(rows));
  write_text(dir / "sweep_plot.json", sweep_plot_json(rows));
  std::cout << sweep_tsv(rows);
  return kOk;
}

// ---------------------------------------------------------------------------

struct SyntheticArgs {
  std::string out, heldout_out;
  std::size_t num = 32, heldout = 0;
  std::uint64_t seed = 123;
};

int run_make_synthetic(const SyntheticArgs& args) {
  SyntheticOptions o;
  o.num_examples = args.num;
  o.seed = args.seed;
  const auto corpus = make_synthetic_corpus(o);
  if (args.heldout >= corpus.size()) throw UsageError("--heldout must be smaller than --num");
  if (args.heldout > 0 && args.heldout_out.empty()) throw UsageError("--heldout needs --heldout-out");
  const std::size_t split = corpus.size() - args.heldout;
  std::string train, held;
  for (std::size_t i = 0; i < corpus.size(); ++i) (i < split ? train : held) += format_example(corpus[i]) + "\n";
  write_text(args.out, train);
  if (args.heldout > 0) write_text(args.heldout_out, held);
  return kOk;
}

void add_train_flags(CLI::App* cmd, TrainArgs& a) {
  cmd->add_option("--config", a.config, "JSON config file");
  cmd->add_option("--variation", a.variation, "base|grasame|var1|var2");
  cmd->add_option("--gnn", a.gnn, "sage|gat|rgcn");
  cmd->add_flag("--freeze-base", a.freeze_base, "train only GNN and reconstruction-head parameters");
  cmd->add_flag("--no-gr-loss", a.no_gr_loss, "drop the graph reconstruction loss");
  cmd->add_flag("--unidirectional", a.unidirectional, "keep only bottom-up message passing edges");
  cmd->add_option("--data", a.data, "training dataset (overrides data.train)");
  cmd->add_option("--valid", a.valid, "validation dataset (overrides data.valid)");
  cmd->add_option("--out", a.out, "output directory (overrides output_dir)");
  cmd->add_option("--epochs", a.epochs);
  cmd->add_option("--eval-every", a.eval_every, "epochs between validation BLEU evaluations");
  cmd->add_option("--lr", a.lr);
  cmd->add_option("--lambda", a.lambda, "GR loss weight");
  cmd->add_option("--seed", a.seed);
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"graph-guided self-attention for KG-to-text generation"};
  app.require_subcommand(1);

  BuildGraphArgs bg;
  auto* build_graph_cmd = app.add_subcommand("build-graph", "dump token-level graphs and edge statistics");
  build_graph_cmd->add_option("--data", bg.data, "JSON-lines dataset")->required();
  build_graph_cmd->add_option("--out", bg.out, "output JSON-lines graph dump")->required();
  build_graph_cmd->add_flag("--unidirectional", bg.unidirectional);

  TrainArgs ta;
  auto* train_cmd = app.add_subcommand("train", "train a model and write checkpoint + metrics");
  add_train_flags(train_cmd, ta);

  GenerateArgs ga;
  auto* generate_cmd = app.add_subcommand("generate", "decode texts with a trained run");
  generate_cmd->add_option("--run", ga.run, "run directory written by train")->required();
  generate_cmd->add_option("--data", ga.data, "JSON-lines dataset")->required();
  generate_cmd->add_option("--out", ga.out, "output JSON-lines (default stdout)");
  generate_cmd->add_option("--checkpoint", ga.checkpoint);
  generate_cmd->add_option("--mode", ga.mode, "greedy|beam");
  generate_cmd->add_option("--beam", ga.beam, "beam size");

  EvalArgs ea;
  auto* eval_cmd = app.add_subcommand("eval", "score predictions against references");
  eval_cmd->add_option("--predictions", ea.predictions, "JSON-lines from generate")->required();
  eval_cmd->add_option("--data", ea.data, "dataset holding the reference texts")->required();

  SweepArgs sa;
  auto* sweep_cmd = app.add_subcommand("sweep-lambda", "validation BLEU for several GR loss weights");
  add_train_flags(sweep_cmd, sa.train);
  sweep_cmd->add_option("--values", sa.values, "comma-separated lambda values")->required();

  SyntheticArgs sy;
  auto* synth_cmd = app.add_subcommand("make-synthetic", "write the templated toy corpus");
  synth_cmd->add_option("--out", sy.out)->required();
  synth_cmd->add_option("--num", sy.num);
  synth_cmd->add_option("--seed", sy.seed);
  synth_cmd->add_option("--heldout", sy.heldout, "number of trailing examples to split off");
  synth_cmd->add_option("--heldout-out", sy.heldout_out);

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? kOk : kUsage;
  }

  try {
    if (*build_graph_cmd) return run_build_graph(bg);
    if (*train_cmd) return run_train(ta);
    if (*generate_cmd) return run_generate(ga);
    if (*eval_cmd) return run_eval(ea);
    if (*sweep_cmd) return run_sweep(sa);
    if (*synth_cmd) return run_make_synthetic(sy);
  } catch (const UsageError& e) {
    std::cerr << "usage error: " << e.what() << "\n";
    return kUsage;
  } catch (const ConfigError& e) {
    std::cerr << "config error: " << e.what() << "\n";
    return kUsage;
  } catch (const DataError& e) {
    std::cerr << "data error: " << e.what() << "\n";
    return kData;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kRuntime;
  }
  return kUsage;
}
