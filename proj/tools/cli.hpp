// Copyright 2026 The dgrain Authors.
// SPDX-License-Identifier: Apache-2.0
//
// Command-line front end. Subcommands:
//
//   gen     --seed N --count N --out PATH [--grid HxW] [--long-mean X] [--short-mean X]
//   train   --data PATH [--config PATH] [--out CKPT] [--log CSV] [--seed N]
//   eval    --ckpt PATH --data PATH [--config PATH] [--report-dir DIR]
//           [--heatmap RECORD_ID --heatmap-out PATH]
//   ablate  --data PATH [--config PATH] [--variants a,b,...] [--seeds N] [--out CSV]
//   inspect --ckpt PATH [--log CSV]
//
// Exit codes: 0 success, 1 runtime error, 2 usage error. Runtime errors are
// reported on stderr as a single line:
//   error kind=<kind> msg="<message>"
#pragma once

#include <CLI11.hpp>

#include <algorithm>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <string>
#include <vector>

#include "dgrain/ablation.hpp"
#include "dgrain/train.hpp"

namespace dgrain {

namespace detail {

inline std::string escape_msg(const std::string &s) {
  std::string out;
  for (char c : s) {
    if (c == '"' || c == '\\')
      out += '\\';
    out += c == '\n' ? ' ' : c;
  }
  return out;
}

inline void parse_grid_size(const std::string &s, GeneratorConfig &g) {
  const auto x = s.find('x');
  if (x == std::string::npos)
    throw ParameterError("--grid expects HxW, got '" + s + "'");
  try {
    std::size_t used = 0;
    g.height = std::stoul(s.substr(0, x), &used);
    if (used != x)
      throw std::invalid_argument(s);
    g.width = std::stoul(s.substr(x + 1), &used);
    if (used != s.size() - x - 1)
      throw std::invalid_argument(s);
  } catch (const std::logic_error &) {
    throw ParameterError("--grid expects HxW, got '" + s + "'");
  }
}

inline std::ofstream open_out(const std::string &path) {
  std::ofstream os(path, std::ios::binary);
  if (!os)
    throw IoError("cannot write '" + path + "'");
  return os;
}

inline TrainConfig config_or_default(const std::string &path) {
  return path.empty() ? TrainConfig{} : load_config(path);
}

} // namespace detail

/// Runs one CLI invocation. `args` excludes the program name.
inline int run_cli(const std::vector<std::string> &args, std::ostream &out, std::ostream &err) {
  CLI::App app{"dgrain: dual-granularity contrastive training on synthetic scenes", "dgrain"};
  app.require_subcommand(1);

  struct {
    std::uint64_t seed = 1;
    std::size_t count = 0;
    std::string grid, out, data, config, log, ckpt, report_dir, heatmap, heatmap_out;
    std::string variants = "short,long,dual";
    std::size_t seeds = 0;
    double long_mean = 0, short_mean = 0;
    bool has_seed = false;
  } o;

  auto *gen = app.add_subcommand("gen", "generate a synthetic scene dataset");
  gen->add_option("--seed", o.seed, "master seed")->required();
  gen->add_option("--count", o.count, "number of records")->required();
  gen->add_option("--out", o.out, "output dataset path")->required();
  gen->add_option("--grid", o.grid, "grid size HxW (default 8x8)");
  gen->add_option("--long-mean", o.long_mean, "target mean long-caption length");
  gen->add_option("--short-mean", o.short_mean, "target mean short-caption length");

  auto *trn = app.add_subcommand("train", "train a model");
  trn->add_option("--data", o.data, "dataset path")->required();
  trn->add_option("--config", o.config, "config file");
  trn->add_option("--out", o.out, "checkpoint path (default model.ckpt)");
  trn->add_option("--log", o.log, "step log CSV path");
  auto *seed_opt = trn->add_option("--seed", o.seed, "seed (default: first config seed)");

  auto *ev = app.add_subcommand("eval", "evaluate a checkpoint on the test split");
  ev->add_option("--ckpt", o.ckpt, "checkpoint path")->required();
  ev->add_option("--data", o.data, "dataset path")->required();
  ev->add_option("--config", o.config, "config file (pooling)");
  ev->add_option("--report-dir", o.report_dir, "directory for report CSVs");
  auto *hm = ev->add_option("--heatmap", o.heatmap, "record id to export a heatmap for");
  ev->add_option("--heatmap-out", o.heatmap_out, "heatmap output path")->needs(hm);

  auto *abl = app.add_subcommand("ablate", "run a variant x seed ablation");
  abl->add_option("--data", o.data, "dataset path")->required();
  abl->add_option("--config", o.config, "base config file");
  abl->add_option("--variants", o.variants, "comma-separated: short,long,dual,dual-s2l");
  abl->add_option("--seeds", o.seeds, "use seeds 1..N (default: config seeds)");
  abl->add_option("--out", o.out, "table CSV path (default stdout)");

  auto *ins = app.add_subcommand("inspect", "print checkpoint header and alpha trace");
  ins->add_option("--ckpt", o.ckpt, "checkpoint path")->required();
  ins->add_option("--log", o.log, "step log CSV path");

  if (!args.empty() && !args[0].empty() && args[0][0] != '-' && !app.get_subcommand_no_throw(args[0])) {
    err << "error kind=usage msg=\"unknown subcommand '" << detail::escape_msg(args[0]) << "'\"\n";
    return 2;
  }
  std::vector<std::string> rev(args.rbegin(), args.rend());
  try {
    app.parse(rev);
  } catch (const CLI::CallForHelp &) {
    out << app.help();
    return 0;
  } catch (const CLI::CallForAllHelp &) {
    out << app.help("", CLI::AppFormatMode::All);
    return 0;
  } catch (const CLI::ParseError &e) {
    err << "error kind=usage msg=\"" << detail::escape_msg(e.what()) << "\"\n";
    return 2;
  }
  o.has_seed = seed_opt->count() > 0;

  try {
    if (gen->parsed()) {
      CorpusConfig cc;
      if (!o.grid.empty())
        detail::parse_grid_size(o.grid, cc.generator);
      if (o.long_mean > 0)
        cc.generator.long_mean = o.long_mean;
      if (o.short_mean > 0)
        cc.generator.short_mean = o.short_mean;
      RecordWriter w(o.out);
      generate_corpus(o.seed, o.count, cc, Vocabulary::standard(),
                      [&](GeneratedRecord &&g) { w.write(g.record); });
      w.close();
      out << "wrote " << o.count << " records to " << o.out << '\n';
    } else if (trn->parsed()) {
      const TrainConfig cfg = detail::config_or_default(o.config);
      const auto records = read_records(o.data);
      const std::uint64_t seed = o.has_seed ? o.seed : cfg.seeds.front();
      const TrainResult r = train(cfg, records, seed);
      const std::string ckpt = o.out.empty() ? "model.ckpt" : o.out;
      save_checkpoint(r.model, ckpt);
      if (!o.log.empty())
        write_run_log(o.log, r.log);
      const auto &last = r.log.steps.back().loss;
      out << "trained " << r.log.steps.size() << " steps, final loss " << last.total
          << "; checkpoint " << ckpt << '\n';
    } else if (ev->parsed()) {
      const TrainConfig cfg = detail::config_or_default(o.config);
      ModelParams m = load_checkpoint(o.ckpt);
      m.text.pool = cfg.model.pool;
      const auto all = read_records(o.data);
      std::vector<SceneRecord> test;
      for (const auto &r : all)
        if (r.split == Split::Test)
          test.push_back(r);
      if (test.empty())
        throw ProtocolError("dataset '" + o.data + "' has no test split");
      const Vocabulary &vocab = Vocabulary::standard();
      const EvalSnapshot s = evaluate(m, test, vocab);

      write_recall_csv_header(out);
      write_recall_csv_row(out, "ltcr", s.long_retrieval);
      write_recall_csv_row(out, "stcr", s.short_retrieval);
      out << "task,accuracy,n\nic," << s.classification_accuracy << ',' << s.num_records << '\n';
      write_selo_csv_header(out);
      write_selo_csv_row(out, "selo", s.selo);

      if (!o.report_dir.empty()) {
        std::filesystem::create_directories(o.report_dir);
        const std::filesystem::path dir(o.report_dir);
        auto rf = detail::open_out((dir / "retrieval.csv").string());
        write_recall_csv_header(rf);
        write_recall_csv_row(rf, "ltcr", s.long_retrieval);
        write_recall_csv_row(rf, "stcr", s.short_retrieval);
        auto cf = detail::open_out((dir / "classification.csv").string());
        cf << "task,accuracy,n\nic," << s.classification_accuracy << ',' << s.num_records
           << '\n';
        auto sf = detail::open_out((dir / "selo.csv").string());
        write_selo_csv_header(sf);
        write_selo_csv_row(sf, "selo", s.selo);
      }
      if (!o.heatmap.empty()) {
        auto it = std::find_if(all.begin(), all.end(),
                               [&](const SceneRecord &r) { return r.id == o.heatmap; });
        if (it == all.end())
          throw InputError("no record with id '" + o.heatmap + "'");
        const auto map = selo_heatmap(m, it->grid, selo_query(*it, vocab), {}, it->id);
        if (o.heatmap_out.empty()) {
          write_heatmap(out, map);
        } else {
          auto hf = detail::open_out(o.heatmap_out);
          write_heatmap(hf, map);
        }
      }
    } else if (abl->parsed()) {
      const TrainConfig cfg = detail::config_or_default(o.config);
      std::vector<std::uint64_t> seeds = cfg.seeds;
      if (o.seeds > 0) {
        seeds.clear();
        for (std::size_t s = 1; s <= o.seeds; ++s)
          seeds.push_back(s);
      }
      const auto records = read_records(o.data);
      const auto res = run_ablation(cfg, parse_variants(o.variants), seeds, records,
                                    [&](const std::string &msg) { err << msg << '\n'; });
      if (o.out.empty()) {
        write_ablation_table(out, res);
      } else {
        auto f = detail::open_out(o.out);
        write_ablation_table(f, res);
      }
    } else if (ins->parsed()) {
      std::ifstream is(o.ckpt, std::ios::binary);
      if (!is)
        throw IoError("cannot open checkpoint '" + o.ckpt + "'");
      std::string header;
      std::getline(is, header);
      const ModelParams m = load_checkpoint(o.ckpt);
      out << "header: " << header << '\n';
      out << "embed_dim=" << m.embed_dim() << " vocab=" << m.vocab_size()
          << " cell_codes=" << m.num_cell_codes() << " pe_length=" << m.text.pe.entries.rows()
          << " attention=" << (m.text.attention ? "true" : "false") << " tau=" << m.tau()
          << '\n';
      if (!o.log.empty()) {
        const RunLog log = read_run_log(o.log);
        if (log.steps.empty())
          throw InputError("log '" + o.log + "' has no steps");
        double lo = log.steps.front().loss.alpha, hi = lo;
        for (const auto &s : log.steps) {
          lo = std::min(lo, s.loss.alpha);
          hi = std::max(hi, s.loss.alpha);
        }
        const auto &first = log.steps.front().loss, &last = log.steps.back().loss;
        out << "steps=" << log.steps.size() << " alpha_first=" << first.alpha
            << " alpha_last=" << last.alpha << " alpha_min=" << lo << " alpha_max=" << hi
            << '\n';
        out << "loss_first=" << first.total << " loss_last=" << last.total << '\n';
        const std::size_t n = log.steps.size(), samples = std::min<std::size_t>(n, 10);
        out << "alpha_trace:";
        for (std::size_t i = 0; i < samples; ++i) {
          const std::size_t k = samples == 1 ? 0 : i * (n - 1) / (samples - 1);
          out << ' ' << log.steps[k].step << ':' << log.steps[k].loss.alpha;
        }
        out << '\n';
      }
    }
  } catch (const Error &e) {
    err << "error kind=" << e.kind() << " msg=\"" << detail::escape_msg(e.what()) << "\"\n";
    return 1;
  } catch (const std::exception &e) {
    err << "error kind=internal msg=\"" << detail::escape_msg(e.what()) << "\"\n";
    return 1;
  }
  return 0;
}

} // namespace dgrain
