#include <CLI11.hpp>
#include <json.hpp>

#include <algorithm>
#include <filesystem>
#include <fstream>
#include <iostream>

#include "epireader/checkpoint.hpp"
#include "epireader/data.hpp"
#include "epireader/model.hpp"
#include "epireader/synthetic.hpp"

namespace fs = std::filesystem;
using nlohmann::json;

namespace {

// A file holds CBT-format blocks; a directory holds one CNN story per file.
std::vector<epi::RawExample> load_examples(const std::string& path) {
  if (fs::is_directory(path)) {
    std::vector<std::string> files;
    for (const auto& entry : fs::directory_iterator(path)) {
      if (entry.is_regular_file()) files.push_back(entry.path().string());
    }
    std::sort(files.begin(), files.end());
    std::vector<epi::RawExample> examples;
    for (const auto& file : files) {
      examples.push_back(epi::parse_cnn_file(file));
    }
    return examples;
  }
  return epi::parse_cbt_file(path);
}

struct TrainArgs {
  std::string preset = "toy";
  std::string train_path, valid_path, out_dir;
  std::uint64_t seed = 1;
  double lambda = 50.0, gamma = 0.04, l2 = 0.001;
  int k = 5, epochs = 20, patience = 2, batch = 32;
  std::size_t min_count = 1;
  bool detach_extractor_probs = false;
};

json run_config_json(const char* command, const TrainArgs& args,
                     const epi::TrainConfig& config) {
  json j;
  j["command"] = command;
  j["preset"] = args.preset;
  j["train"] = args.train_path;
  j["valid"] = args.valid_path;
  j["out"] = args.out_dir;
  j["config"] = json::parse(epi::config_to_json(config));
  return j;
}

int cmd_train(const TrainArgs& args, const CLI::App& sub) {
  epi::TrainConfig config = epi::resolve_preset(args.preset);
  config.seed = args.seed;
  if (sub.count("--lambda")) config.lambda = args.lambda;
  if (sub.count("--gamma")) config.gamma = args.gamma;
  if (sub.count("--l2")) config.l2 = args.l2;
  if (sub.count("--k")) config.top_k = args.k;
  if (sub.count("--epochs")) config.max_epochs = args.epochs;
  if (sub.count("--patience")) config.patience = args.patience;
  if (sub.count("--batch")) config.batch_size = args.batch;
  if (sub.count("--min-count")) config.min_count = args.min_count;
  config.detach_extractor_probs = args.detach_extractor_probs;
  config.validate();

  auto raw_train = load_examples(args.train_path);
  auto raw_valid = load_examples(args.valid_path);
  epi::Vocabulary vocab = epi::Vocabulary::build(raw_train, config.min_count);
  auto train_set = epi::encode_examples(raw_train, vocab);
  auto valid_set = epi::encode_examples(raw_valid, vocab);

  fs::create_directories(args.out_dir);
  vocab.save(args.out_dir + "/vocab.txt");
  {
    std::ofstream out(args.out_dir + "/config.json");
    out << run_config_json("train", args, config).dump(2) << "\n";
  }

  std::ofstream metrics(args.out_dir + "/metrics.jsonl");
  auto on_epoch = [&](const epi::EpochMetrics& m) {
    json line;
    line["epoch"] = m.epoch;
    line["train_loss"] = m.train_loss;
    line["L_E"] = m.loss_extractor;
    line["L_R"] = m.loss_reasoner;
    line["valid_acc_extractor"] = m.valid_acc_extractor;
    line["valid_acc_full"] = m.valid_acc_full;
    line["wallclock_s"] = m.wallclock_s;
    metrics << line.dump() << "\n";
    metrics.flush();
    std::cout << "epoch " << m.epoch << ": train_loss " << m.train_loss
              << ", valid_acc_extractor " << m.valid_acc_extractor
              << ", valid_acc_full " << m.valid_acc_full << "\n";
    if (m.skipped_zero_support > 0) {
      std::cerr << "warning: dropped " << m.skipped_zero_support
                << " zero-support training examples this epoch\n";
    }
  };

  epi::TrainResult result = epi::train(
      config, static_cast<int>(vocab.size()), train_set, valid_set, on_epoch);
  epi::save_checkpoint(args.out_dir + "/checkpoint.epir", result.params,
                       config, vocab.hash());
  std::cout << "best epoch " << result.best_epoch
            << " with validation accuracy " << result.best_accuracy << "\n"
            << "checkpoint: " << args.out_dir << "/checkpoint.epir\n";
  return 0;
}

struct EvalArgs {
  std::string checkpoint, test_path, vocab_path, out_dir;
  std::string mode = "full";
  int workers = 1;
  bool dump_predictions = false;
};

int cmd_eval(const EvalArgs& args) {
  std::string vocab_path = args.vocab_path;
  if (vocab_path.empty()) {
    vocab_path =
        (fs::path(args.checkpoint).parent_path() / "vocab.txt").string();
  }
  epi::Vocabulary vocab = epi::Vocabulary::load(vocab_path);
  epi::LoadedCheckpoint loaded =
      epi::load_checkpoint(args.checkpoint, vocab.hash());
  auto examples = epi::encode_examples(load_examples(args.test_path), vocab);

  const epi::EvalMode mode = args.mode == "extractor"
                                 ? epi::EvalMode::extractor_only
                                 : epi::EvalMode::full;
  epi::EvalReport report = epi::evaluate(loaded.params, loaded.config,
                                         examples, mode, args.workers);

  json summary;
  summary["examples"] = report.total;
  summary["zero_support"] = report.zero_support;
  summary["accuracy_extractor"] =
      report.accuracy(epi::EvalMode::extractor_only);
  if (mode == epi::EvalMode::full) {
    summary["accuracy_full"] = report.accuracy(epi::EvalMode::full);
  }
  std::cout << summary.dump(2) << "\n";

  if (args.dump_predictions) {
    for (const auto& pr : report.predictions) {
      json line;
      line["source_id"] = pr.source_id;
      line["gold"] = vocab.token_of(pr.gold);
      line["zero_support"] = pr.zero_support;
      const int predicted = mode == epi::EvalMode::full
                                ? pr.predicted_full
                                : pr.predicted_extractor;
      line["predicted"] = predicted >= 0 ? vocab.token_of(predicted) : "";
      json slate = json::array();
      for (std::size_t i = 0; i < pr.slate.size(); ++i) {
        json row;
        row["candidate"] = vocab.token_of(pr.slate[i]);
        row["p"] = pr.p[i];
        if (!pr.e.empty()) {
          row["e"] = pr.e[i];
          row["pi"] = pr.pi[i];
        }
        slate.push_back(row);
      }
      line["slate"] = slate;
      std::cout << line.dump() << "\n";
    }
  }
  if (!args.out_dir.empty()) {
    fs::create_directories(args.out_dir);
    std::ofstream out(args.out_dir + "/eval_report.json");
    out << summary.dump(2) << "\n";
  }
  return 0;
}

struct PredictArgs {
  std::string checkpoint, vocab_path, example_path;
  std::string format = "cbt";
};

int cmd_predict(const PredictArgs& args) {
  std::string vocab_path = args.vocab_path;
  if (vocab_path.empty()) {
    vocab_path =
        (fs::path(args.checkpoint).parent_path() / "vocab.txt").string();
  }
  epi::Vocabulary vocab = epi::Vocabulary::load(vocab_path);
  epi::LoadedCheckpoint loaded =
      epi::load_checkpoint(args.checkpoint, vocab.hash());

  epi::RawExample raw;
  if (args.format == "cnn") {
    raw = epi::parse_cnn_file(args.example_path);
  } else {
    auto all = epi::parse_cbt_file(args.example_path);
    if (all.empty()) {
      throw epi::Error("no example found in " + args.example_path);
    }
    raw = all.front();
  }
  epi::ClozeExample example = epi::encode_example(raw, vocab);

  epi::ForwardOptions options;
  epi::ExampleOutput out =
      epi::forward_example(loaded.params, loaded.config, example, options);
  if (out.no_supported_candidates) {
    std::cout << "no candidate occurs in the text; nothing to rank\n";
    return 0;
  }
  std::vector<std::size_t> order(out.slate.size());
  for (std::size_t i = 0; i < order.size(); ++i) order[i] = i;
  std::sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) {
    return out.combined.at(a) > out.combined.at(b);
  });
  std::cout << "candidate\tp\te\tpi\n";
  for (std::size_t i : order) {
    std::cout << vocab.token_of(out.slate.answers[i]) << "\t"
              << out.slate.probs.at(i) << "\t" << out.evidence.evidence.at(i)
              << "\t" << out.combined.at(i) << "\n";
  }
  return 0;
}

struct GenArgs {
  std::string task = "locate";
  std::string out_dir;
  int entities = 8, sentences = 0, vocab_size = 40, examples = 1000;
  std::uint64_t seed = 1;
};

int cmd_gen_data(const GenArgs& args) {
  epi::SyntheticSpec spec;
  spec.task = args.task == "alternation"
                  ? epi::SyntheticSpec::Task::alternation
                  : epi::SyntheticSpec::Task::locate;
  spec.num_entities = args.entities;
  spec.num_sentences = args.sentences;
  spec.vocab_size = args.vocab_size;
  spec.num_examples = args.examples;
  spec.seed = args.seed;
  epi::SyntheticCorpus corpus = epi::generate_synthetic(spec);

  fs::create_directories(args.out_dir);
  auto write = [&](const char* name, const std::vector<epi::RawExample>& set) {
    std::ofstream out(args.out_dir + "/" + name, std::ios::binary);
    out << epi::render_cbt(set);
  };
  write("train.txt", corpus.train);
  write("valid.txt", corpus.valid);
  write("test.txt", corpus.test);
  std::cout << "wrote " << corpus.train.size() << " train, "
            << corpus.valid.size() << " valid, " << corpus.test.size()
            << " test examples to " << args.out_dir << "\n";
  return 0;
}

struct GradCheckArgs {
  std::uint64_t seed = 7;
  double epsilon = 1e-5;
  double tolerance = 1e-4;
  std::string break_op;
};

int cmd_grad_check(const GradCheckArgs& args) {
  epi::GradCheckReport report = epi::model_grad_check(
      args.seed, args.epsilon, args.tolerance, args.break_op);
  for (const auto& entry : report.entries) {
    std::cout << (entry.pass ? "PASS" : "FAIL") << "\t" << entry.name << "\t"
              << entry.max_rel_err << "\n";
  }
  if (!report.all_pass()) {
    std::cerr << "gradient check failed\n";
    return 3;
  }
  std::cout << "all " << report.entries.size()
            << " parameter tensors pass at tolerance " << args.tolerance
            << "\n";
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{
      "EpiReader: two-stage Cloze comprehension (extract, then reason)"};
  app.require_subcommand(1);

  TrainArgs train_args;
  CLI::App* train = app.add_subcommand("train", "Train a model");
  train->add_option("--preset", train_args.preset, "cbt-ne, cbt-cn, cnn or toy")
      ->default_val("toy");
  train->add_option("--train", train_args.train_path, "Training corpus")
      ->required();
  train->add_option("--valid", train_args.valid_path, "Validation corpus")
      ->required();
  train->add_option("--out", train_args.out_dir, "Output directory")
      ->required();
  train->add_option("--seed", train_args.seed, "RNG seed");
  train->add_option("--lambda", train_args.lambda, "Second-stage loss weight");
  train->add_option("--gamma", train_args.gamma, "Margin");
  train->add_option("--l2", train_args.l2, "L2 coefficient");
  train->add_option("--k", train_args.k, "Candidates to shortlist");
  train->add_option("--epochs", train_args.epochs, "Epoch cap");
  train->add_option("--patience", train_args.patience, "Early-stop patience");
  train->add_option("--batch", train_args.batch, "Batch size");
  train->add_option("--min-count", train_args.min_count,
                    "Vocabulary frequency threshold");
  train->add_flag("--detach-extractor-probs",
                  train_args.detach_extractor_probs,
                  "Ablation: stop the margin-loss gradient at the slate");

  EvalArgs eval_args;
  CLI::App* eval = app.add_subcommand("eval", "Evaluate a checkpoint");
  eval->add_option("--checkpoint", eval_args.checkpoint, "Checkpoint file")
      ->required();
  eval->add_option("--test", eval_args.test_path, "Evaluation corpus")
      ->required();
  eval->add_option("--vocab", eval_args.vocab_path,
                   "Vocabulary file (default: vocab.txt next to checkpoint)");
  eval->add_option("--mode", eval_args.mode, "full or extractor")
      ->check(CLI::IsMember({"full", "extractor"}));
  eval->add_option("--eval-workers", eval_args.workers,
                   "Parallel evaluation workers");
  eval->add_flag("--dump-predictions", eval_args.dump_predictions,
                 "Print one JSON line per example");
  eval->add_option("--out", eval_args.out_dir, "Report output directory");

  PredictArgs predict_args;
  CLI::App* predict =
      app.add_subcommand("predict", "Rank candidates for one example");
  predict->add_option("--checkpoint", predict_args.checkpoint,
                      "Checkpoint file")
      ->required();
  predict->add_option("--example", predict_args.example_path, "Example file")
      ->required();
  predict->add_option("--vocab", predict_args.vocab_path, "Vocabulary file");
  predict->add_option("--format", predict_args.format, "cbt or cnn")
      ->check(CLI::IsMember({"cbt", "cnn"}));

  GenArgs gen_args;
  CLI::App* gen = app.add_subcommand("gen-data", "Generate a synthetic corpus");
  gen->add_option("--task", gen_args.task, "locate or alternation")
      ->check(CLI::IsMember({"locate", "alternation"}));
  gen->add_option("--out", gen_args.out_dir, "Output directory")->required();
  gen->add_option("--entities", gen_args.entities, "Entity pool size");
  gen->add_option("--sentences", gen_args.sentences, "Sentences per passage");
  gen->add_option("--vocab-size", gen_args.vocab_size, "Filler word budget");
  gen->add_option("--examples", gen_args.examples, "Training examples");
  gen->add_option("--seed", gen_args.seed, "RNG seed");

  GradCheckArgs gc_args;
  CLI::App* gc = app.add_subcommand(
      "grad-check", "Finite-difference check of the full loss (micro model)");
  gc->add_option("--seed", gc_args.seed, "RNG seed");
  gc->add_option("--epsilon", gc_args.epsilon, "FD step");
  gc->add_option("--tolerance", gc_args.tolerance, "Max relative error");
  gc->add_option("--break-op", gc_args.break_op,
                 "Fault injection: corrupt the named op's backward rule");

  try {
    app.parse(argc, argv);
    if (train->parsed()) return cmd_train(train_args, *train);
    if (eval->parsed()) return cmd_eval(eval_args);
    if (predict->parsed()) return cmd_predict(predict_args);
    if (gen->parsed()) return cmd_gen_data(gen_args);
    if (gc->parsed()) return cmd_grad_check(gc_args);
    return 1;
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? 0 : 1;
  } catch (const epi::ConfigError& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  } catch (const epi::ParseError& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 2;
  } catch (const epi::VocabError& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 2;
  } catch (const epi::CheckpointError& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 2;
  } catch (const epi::NumericError& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 3;
  } catch (const epi::DimensionError& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 3;
  } catch (const epi::DegenerateInputError& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 3;
  } catch (const epi::Error& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 2;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 2;
  }
}
