#ifndef SSREC_CLI_HPP
#define SSREC_CLI_HPP

#include <cstdint>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include <CLI11.hpp>
#include <json.hpp>

#include "ssrec/ssrec.hpp"

namespace ssrec::cli {

enum ExitCode : int { kOk = 0, kUsage = 1, kData = 2, kIntegrity = 3 };

/// 64-bit FNV-1a, used for artifact digests.
inline std::uint64_t fnv1a(std::string_view s) {
  std::uint64_t h = 1469598103934665603ULL;
  for (unsigned char c : s) {
    h ^= c;
    h *= 1099511628211ULL;
  }
  return h;
}

inline std::string hex64(std::uint64_t v) {
  std::ostringstream os;
  os << std::hex << std::setw(16) << std::setfill('0') << v;
  return os.str();
}

inline std::string read_text(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw DataError("cannot open " + path);
  std::ostringstream os;
  os << in.rdbuf();
  return os.str();
}

inline void write_text(const std::string& path, const std::string& text) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw DataError("cannot open " + path + " for writing");
  out << text;
  if (!out) throw DataError("failed writing " + path);
}

inline nlohmann::json read_json(const std::string& path) {
  try {
    return nlohmann::json::parse(read_text(path));
  } catch (const nlohmann::json::parse_error& e) {
    throw DataError(path + ": malformed JSON: " + e.what());
  }
}

inline InputFormat guess_format(const std::string& path, const std::string& explicit_format) {
  if (explicit_format == "csv") return InputFormat::csv;
  if (explicit_format == "jsonl") return InputFormat::jsonl;
  if (!explicit_format.empty()) throw ConfigError("unknown format '" + explicit_format + "' (jsonl or csv)");
  return std::filesystem::path(path).extension() == ".csv" ? InputFormat::csv : InputFormat::jsonl;
}

// ---------------------------------------------------------------------------
// Bundle: dataset.json (exact ids), vocab.json, profiles.json
// ---------------------------------------------------------------------------

inline std::string bundle_file(const std::string& dir, const char* name) {
  return (std::filesystem::path(dir) / name).string();
}

inline nlohmann::json profiles_json(const Dataset& ds, const ProfileMap& profiles) {
  nlohmann::json j = nlohmann::json::object();
  for (const auto& [id, p] : profiles) {
    std::vector<std::string> lt, win;
    for (const auto& ev : p.long_term.events()) lt.push_back(ds.vocab.items.name(ev.item));
    for (const auto& ev : p.short_term.events()) win.push_back(ds.vocab.items.name(ev.item));
    j[ds.vocab.users.name(id.value)] = {{"long_term", lt}, {"window", win}};
  }
  return j;
}

/// Returns the digest of dataset.json.
inline std::string write_bundle(const std::string& dir, const Dataset& ds, std::size_t window) {
  std::filesystem::create_directories(dir);
  const auto text = dataset_to_json(ds).dump();
  write_text(bundle_file(dir, "dataset.json"), text);
  write_text(bundle_file(dir, "vocab.json"), vocabulary_json(ds.vocab).dump(1));
  write_text(bundle_file(dir, "profiles.json"), profiles_json(ds, build_profiles(ds, window)).dump(1));
  return hex64(fnv1a(text));
}

inline Dataset load_bundle(const std::string& dir) {
  return dataset_from_json(read_json(bundle_file(dir, "dataset.json")));
}

inline ModelBundle load_models(const std::string& path) {
  try {
    return bundle_from_json(read_json(path));
  } catch (const nlohmann::json::exception& e) {
    throw DataError(path + ": malformed model bundle: " + e.what());
  }
}

/// Item JSON: {"category": .., "producer": .., "entities": [..]}, inline or
/// as a path. Unknown names are interned into vocab.
inline SocialItem parse_item(const std::string& arg, Vocabularies& vocab) {
  nlohmann::json j;
  try {
    j = nlohmann::json::parse(arg.find('{') != std::string::npos ? arg : read_text(arg));
    SocialItem it;
    it.item_id = j.value("item", std::string("query"));
    it.category = CategoryId(vocab.categories.intern(j.at("category").get<std::string>()));
    it.producer = ProducerId(vocab.users.intern(j.at("producer").get<std::string>()));
    for (const auto& e : j.value("entities", nlohmann::json::array()))
      it.entities.push_back(EntityId(vocab.entities.intern(e.get<std::string>())));
    return it;
  } catch (const nlohmann::json::exception& e) {
    throw DataError(std::string("bad item JSON: ") + e.what());
  }
}

inline std::string format_number(double v) {
  std::ostringstream os;
  os << v;
  return os.str();
}

inline std::string format_vector(const std::vector<double>& v) {
  std::string s = "<";
  for (std::size_t i = 0; i < v.size(); ++i) s += (i ? "," : "") + format_number(v[i]);
  return s + ">";
}

/// {block, category, f_producer, f_entity, w_entity}
inline std::string format_pseudo_query(const PseudoQuery& q, const Vocabularies& vocab) {
  return "{" + std::to_string(q.block) + ", " + vocab.categories.name(q.category.value) + ", " +
         format_vector(q.f_producer) + ", " + format_vector(q.f_entity) + ", " + format_vector(q.w_entity) + "}";
}

// ---------------------------------------------------------------------------
// Command line
// ---------------------------------------------------------------------------

struct Flags {
  bool json = false;
  bool debug = false;
  std::string config;
  std::optional<std::uint64_t> seed;
  std::optional<std::size_t> states_override;
  std::optional<std::size_t> window;
  std::optional<double> lambda_s, mu_producer, mu_entity;
  std::optional<std::size_t> expansion_window, expansion_per_entity;
  std::optional<double> expansion_cap;
  std::vector<std::size_t> k;
  std::optional<std::size_t> partitions;
  bool oracle = false;
};

inline RunConfig resolve_config(const Flags& f) {
  RunConfig cfg;
  if (auto path = config_path(f.config)) apply_config_file(cfg, *path);
  if (f.seed) cfg.seed = *f.seed;
  if (f.states_override) {
    cfg.bihmm.consumer_states = *f.states_override;
    cfg.bihmm.producer_states = *f.states_override;
  }
  if (f.window) cfg.window = *f.window;
  if (f.lambda_s) cfg.scoring.lambda_s = *f.lambda_s;
  if (f.mu_producer) cfg.scoring.mu_producer = *f.mu_producer;
  if (f.mu_entity) cfg.scoring.mu_entity = *f.mu_entity;
  if (f.expansion_window) cfg.expansion.window = *f.expansion_window;
  if (f.expansion_per_entity) cfg.expansion.per_entity = *f.expansion_per_entity;
  if (f.expansion_cap) cfg.expansion.cap = *f.expansion_cap;
  if (!f.k.empty()) cfg.harness.k = f.k;
  if (f.partitions) cfg.harness.partitions = *f.partitions;
  if (f.oracle) cfg.harness.oracle = true;
  cfg.validate();
  return cfg;
}

inline void add_common_flags(CLI::App& app, Flags& f) {
  app.add_flag("--json", f.json, "Machine-readable JSON on stdout");
  app.add_flag("--debug", f.debug, "Print intermediate values (pseudo-queries)");
  app.add_option("--config", f.config, "JSON config file (default: $SSREC_CONFIG)");
  app.add_option("--seed", f.seed, "Run seed");
  app.add_option("--states-override", f.states_override, "Fixed state count for every HMM");
  app.add_option("--window", f.window, "Short-term window capacity |W|");
  app.add_option("--lambda-s", f.lambda_s, "Short-term weight");
  app.add_option("--mu-producer", f.mu_producer, "Dirichlet prior for producers");
  app.add_option("--mu-entity", f.mu_entity, "Dirichlet prior for entities");
  app.add_option("--expansion-window", f.expansion_window, "Co-occurrence distance d");
  app.add_option("--expansion-per-entity", f.expansion_per_entity, "Partners per entity m");
  app.add_option("--expansion-cap", f.expansion_cap, "Ceiling on expansion weights");
  app.add_option("--k", f.k, "k values for P@k")->delimiter(',');
  app.add_option("--partitions", f.partitions, "Stream partitions");
  app.add_flag("--oracle", f.oracle, "Brute-force scoring instead of the index");
}

struct DataSource {
  std::string bundle;
  std::string input;
  std::string items;
  std::string format;

  void add_to(CLI::App& app) {
    app.add_option("--bundle", bundle, "Bundle directory written by ingest");
    app.add_option("--input", input, "Raw interaction log (JSONL or CSV)");
    app.add_option("--items", items, "Item stream JSONL with creation timestamps");
    app.add_option("--format", format, "jsonl or csv (default: by extension)");
  }

  Dataset load() const {
    if (!bundle.empty()) return load_bundle(bundle);
    if (input.empty()) throw ConfigError("one of --bundle or --input is required");
    std::ifstream in(input);
    if (!in) throw DataError("cannot open input file '" + input + "'");
    auto rows = guess_format(input, format) == InputFormat::csv ? parse_csv(in) : parse_jsonl(in);
    return dataset_from_rows(std::move(rows), items.empty() ? std::vector<LogRow>{} : read_items_file(items));
  }
};

inline std::string users_line(const std::vector<ScoredUser>& top, const Vocabularies& vocab) {
  std::ostringstream os;
  for (std::size_t r = 0; r < top.size(); ++r)
    os << r + 1 << '\t' << vocab.users.name(top[r].consumer.value) << '\t' << std::setprecision(10)
       << top[r].score << '\n';
  return os.str();
}

inline int run(std::vector<std::string> args, std::ostream& out, std::ostream& err) {
  CLI::App app{"ssrec: stream recommendation with BiHMM profiles and a CPPse index", "ssrec"};
  app.require_subcommand(1);
  Flags flags;
  add_common_flags(app, flags);
  app.fallthrough();

  // ingest
  auto* ingest = app.add_subcommand("ingest", "Parse a log into a dataset bundle");
  DataSource ingest_src;
  std::string ingest_out;
  ingest->add_option("--input", ingest_src.input, "Interaction log (JSONL or CSV)")->required();
  ingest->add_option("--items", ingest_src.items, "Item stream JSONL with creation timestamps");
  ingest->add_option("--format", ingest_src.format, "jsonl or csv (default: by extension)");
  ingest->add_option("--out", ingest_out, "Bundle directory")->required();

  // train
  auto* train = app.add_subcommand("train", "Train producer and consumer models");
  DataSource train_src;
  train_src.add_to(*train);
  std::string train_out;
  train->add_option("--out", train_out, "Model bundle path (default: <bundle>/models.json)");

  // expand
  auto* expand = app.add_subcommand("expand", "Build entity co-occurrence statistics");
  DataSource expand_src;
  expand_src.add_to(*expand);
  std::string expand_out;
  expand->add_option("--out", expand_out, "Statistics path (default: <bundle>/stats.json)");

  // index
  auto* index = app.add_subcommand("index", "Build, query, update or verify a CPPse index");
  index->require_subcommand(1);
  index->fallthrough();
  auto* ibuild = index->add_subcommand("build", "Build an index snapshot");
  DataSource ibuild_src;
  ibuild_src.add_to(*ibuild);
  std::string ibuild_models, ibuild_out;
  ibuild->add_option("--models", ibuild_models, "Model bundle (default: <bundle>/models.json)");
  ibuild->add_option("--out", ibuild_out, "Snapshot path (default: <bundle>/index.bin)");

  auto* iquery = index->add_subcommand("query", "Top-k consumers for one item");
  std::string iquery_index, iquery_item, iquery_stats;
  std::size_t iquery_k = 10;
  iquery->add_option("--index", iquery_index, "Snapshot path")->required();
  iquery->add_option("--item", iquery_item, "Item JSON (inline or a file)")->required();
  iquery->add_option("-k", iquery_k, "Number of consumers");
  iquery->add_option("--stats", iquery_stats, "Co-occurrence statistics for expansion");

  auto* iupdate = index->add_subcommand("update", "Apply a batch of new interactions");
  std::string iupdate_index, iupdate_batch, iupdate_models, iupdate_out;
  iupdate->add_option("--index", iupdate_index, "Snapshot path")->required();
  iupdate->add_option("--batch", iupdate_batch, "Interaction rows (JSONL)")->required();
  iupdate->add_option("--models", iupdate_models, "Model bundle")->required();
  iupdate->add_option("--out", iupdate_out, "Output snapshot (default: overwrite --index)");

  auto* iverify = index->add_subcommand("verify", "Load a snapshot and check every invariant");
  std::string iverify_index;
  iverify->add_option("--index", iverify_index, "Snapshot path")->required();

  // simulate
  auto* simulate = app.add_subcommand("simulate", "Rolling-partition stream simulation");
  DataSource sim_src;
  sim_src.add_to(*simulate);
  bool sim_no_expansion = false, sim_accuracy = false;
  std::string sim_out;
  simulate->add_flag("--no-expansion", sim_no_expansion, "Disable entity expansion");
  simulate->add_flag("--accuracy", sim_accuracy, "Report HMM vs BiHMM next-category accuracy instead");
  simulate->add_option("--out", sim_out, "Also write the JSON report here");

  // sweep
  auto* sweepc = app.add_subcommand("sweep", "P@k over a parameter grid (CSV)");
  DataSource sweep_src;
  sweep_src.add_to(*sweepc);
  std::string sweep_param = "lambda";
  std::vector<double> sweep_values;
  sweepc->add_option("--param", sweep_param, "lambda or window")->check(CLI::IsMember({"lambda", "window"}));
  sweepc->add_option("--values", sweep_values, "Grid values")->delimiter(',');

  // bench
  auto* bench = app.add_subcommand("bench", "knn_query vs brute force latency");
  DataSource bench_src;
  bench_src.add_to(*bench);
  std::size_t bench_users = 0, bench_queries = 200;
  bench->add_option("--synthetic-users", bench_users, "Generate this many synthetic consumers instead");
  bench->add_option("--queries", bench_queries, "Distinct items to time");

  // synth
  auto* synth = app.add_subcommand("synth", "Write a planted synthetic dataset");
  SyntheticSpec spec;
  std::string synth_out;
  synth->add_option("--out", synth_out, "Output directory")->required();
  synth->add_option("--consumers", spec.consumers, "Consumers");
  synth->add_option("--producers", spec.producers, "Producers");
  synth->add_option("--categories", spec.categories, "Categories");
  synth->add_option("--steps", spec.steps, "Interactions per consumer");
  synth->add_option("--home-categories", spec.home_categories, "Categories per consumer (0 = all)");

  std::reverse(args.begin(), args.end());
  try {
    app.parse(args);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e, out, err);
    return code == 0 ? kOk : kUsage;
  }

  try {
    const RunConfig cfg = resolve_config(flags);

    if (*ingest) {
      const auto ds = ingest_src.load();
      const auto digest = write_bundle(ingest_out, ds, cfg.window);
      if (flags.json) {
        out << nlohmann::json{{"schema", "ssrec-ingest"},     {"version", 1},
                              {"interactions", ds.interactions.size()}, {"items", ds.items.size()},
                              {"users", ds.vocab.users.size()},         {"categories", ds.n_categories()},
                              {"entities", ds.vocab.entities.size()},   {"digest", digest}}
                   .dump()
            << '\n';
      } else {
        out << "ingested " << ds.interactions.size() << " interactions, " << ds.items.size() << " items, "
            << ds.vocab.users.size() << " users; digest " << digest << '\n';
      }
      return kOk;
    }

    if (*train) {
      const auto ds = train_src.load();
      const auto profiles = build_profiles(ds, cfg.window);
      const auto models = train_models(ds, ds.interactions, profiles, cfg.training());
      const auto text = bundle_to_json(models).dump();
      std::string path = train_out;
      if (path.empty()) {
        if (train_src.bundle.empty()) throw ConfigError("--out is required without --bundle");
        path = bundle_file(train_src.bundle, "models.json");
      }
      write_text(path, text);
      const auto digest = hex64(fnv1a(text));
      if (flags.json) {
        out << nlohmann::json{{"schema", "ssrec-train"}, {"version", 1}, {"producers", models.producers.models.size()},
                              {"consumers", models.consumers.size()}, {"digest", digest}}
                   .dump()
            << '\n';
      } else {
        out << "trained " << models.producers.models.size() << " producer and " << models.consumers.size()
            << " consumer models; digest " << digest << '\n';
        if (flags.debug)
          for (const auto& w : models.producers.warnings) err << "warning: " << w << '\n';
      }
      return kOk;
    }

    if (*expand) {
      const auto ds = expand_src.load();
      const auto stats = build_cooccurrence(items_in_order(ds.interactions), ds.items, cfg.expansion);
      std::string path = expand_out;
      if (path.empty()) {
        if (expand_src.bundle.empty()) throw ConfigError("--out is required without --bundle");
        path = bundle_file(expand_src.bundle, "stats.json");
      }
      write_text(path, stats_to_json(stats, ds.vocab).dump(1));
      out << (flags.json ? nlohmann::json{{"schema", "ssrec-expand"}, {"version", 1}, {"path", path}}.dump()
                         : "wrote " + path)
          << '\n';
      return kOk;
    }

    if (*ibuild) {
      const auto ds = ibuild_src.load();
      std::string models_path = ibuild_models, out_path = ibuild_out;
      if (models_path.empty() || out_path.empty()) {
        if (ibuild_src.bundle.empty()) throw ConfigError("--models and --out are required without --bundle");
        if (models_path.empty()) models_path = bundle_file(ibuild_src.bundle, "models.json");
        if (out_path.empty()) out_path = bundle_file(ibuild_src.bundle, "index.bin");
      }
      const auto models = load_models(models_path);
      const auto profiles = build_profiles(ds, cfg.window);
      const auto ix = build_index(make_user_states(profiles, models, cfg.scoring.floor), ds.vocab,
                                  BackgroundModel::from_dataset(ds, ds.interactions), cfg.scoring, cfg.index,
                                  ds.n_categories(), cfg.window);
      save_index_file(ix, out_path);
      if (flags.json) {
        out << nlohmann::json{{"schema", "ssrec-index"}, {"version", 1}, {"users", ix.records().size()},
                              {"blocks", ix.blocks().size()}, {"trees", ix.trees().size()}, {"path", out_path}}
                   .dump()
            << '\n';
      } else {
        out << "indexed " << ix.records().size() << " users in " << ix.blocks().size() << " blocks, "
            << ix.trees().size() << " trees -> " << out_path << '\n';
      }
      return kOk;
    }

    if (*iquery) {
      auto ix = load_index_file(iquery_index, false);
      const auto item = parse_item(iquery_item, ix.mutable_vocab());
      std::optional<CooccurrenceStats> stats;
      if (!iquery_stats.empty()) stats = stats_from_json(read_json(iquery_stats), ix.vocab(), cfg.expansion.cap);
      const auto si = ScoringItem::from(item, stats ? &*stats : nullptr, cfg.expansion.per_entity);
      const double lambda = flags.lambda_s ? *flags.lambda_s : ix.scoring().lambda_s;
      if (flags.debug) {
        std::set<std::uint32_t> blocks;
        for (auto t : ix.locate_trees(si)) blocks.insert(ix.trees()[t].block);
        for (auto b : blocks) err << "pseudo-query " << format_pseudo_query(gen_pseudo_query(ix, si, b), ix.vocab()) << '\n';
      }
      QueryStats qs;
      const auto top = ix.knn_query(si, iquery_k, lambda, &qs);
      if (flags.json) {
        nlohmann::json j = {{"schema", "ssrec-query"}, {"version", 1}, {"k", iquery_k}};
        j["results"] = nlohmann::json::array();
        for (const auto& u : top) j["results"].push_back({{"consumer", ix.vocab().users.name(u.consumer.value)}, {"score", u.score}});
        j["stats"] = {{"trees", qs.trees}, {"nodes_expanded", qs.nodes_expanded}, {"leaves_scored", qs.leaves_scored}};
        if (flags.debug) {
          j["pseudo_queries"] = nlohmann::json::array();
          std::set<std::uint32_t> blocks;
          for (auto t : ix.locate_trees(si)) blocks.insert(ix.trees()[t].block);
          for (auto b : blocks) {
            const auto q = gen_pseudo_query(ix, si, b);
            j["pseudo_queries"].push_back({{"block", q.block},
                                           {"category", ix.vocab().categories.name(q.category.value)},
                                           {"f_producer", q.f_producer},
                                           {"f_entity", q.f_entity},
                                           {"w_entity", q.w_entity}});
          }
        }
        out << j.dump() << '\n';
      } else {
        out << users_line(top, ix.vocab());
      }
      return kOk;
    }

    if (*iupdate) {
      auto ix = load_index_file(iupdate_index, false);
      const auto models = load_models(iupdate_models);
      std::ifstream in(iupdate_batch);
      if (!in) throw DataError("cannot open batch file '" + iupdate_batch + "'");
      auto rows = parse_jsonl(in);
      std::stable_sort(rows.begin(), rows.end(), [](const LogRow& a, const LogRow& b) { return a.ts < b.ts; });
      std::vector<UpdateEvent> events;
      auto& vocab = ix.mutable_vocab();
      for (const auto& row : rows) {
        ProfileEvent ev;
        ev.item = vocab.items.intern(row.item);
        ev.category = CategoryId(vocab.categories.intern(row.category));
        ev.producer = ProducerId(vocab.users.intern(row.producer));
        for (const auto& e : row.entities) ev.entities.push_back(EntityId(vocab.entities.intern(e)));
        ev.timestamp = row.ts;
        events.push_back({ConsumerId(vocab.users.intern(row.consumer)), std::move(ev)});
      }
      const auto rep = ix.apply_updates(events, models);
      save_index_file(ix, iupdate_out.empty() ? iupdate_index : iupdate_out);
      if (flags.json) {
        out << nlohmann::json{{"schema", "ssrec-update"},
                              {"version", 1},
                              {"profiles_updated", rep.profiles_updated},
                              {"new_users", rep.new_users},
                              {"new_blocks", rep.new_blocks},
                              {"new_hash_links", rep.new_hash_links},
                              {"reserve_slots_used", rep.reserve_slots_used},
                              {"rebuilt_blocks", rep.rebuilt_blocks}}
                   .dump()
            << '\n';
      } else {
        out << rep.profiles_updated << " profiles updated\n";
      }
      return kOk;
    }

    if (*iverify) {
      const auto ix = load_index_file(iverify_index, true);
      out << (flags.json ? nlohmann::json{{"schema", "ssrec-verify"}, {"version", 1}, {"ok", true},
                                          {"users", ix.records().size()}, {"blocks", ix.blocks().size()},
                                          {"trees", ix.trees().size()}}
                               .dump()
                         : "ok: " + std::to_string(ix.records().size()) + " users, " +
                               std::to_string(ix.blocks().size()) + " blocks, " + std::to_string(ix.trees().size()) +
                               " trees")
          << '\n';
      return kOk;
    }

    if (*simulate) {
      const auto ds = sim_src.load();
      if (sim_accuracy) {
        const auto rep = prediction_accuracy(ds, cfg.training());
        const auto j = accuracy_json(rep);
        if (!sim_out.empty()) write_text(sim_out, j.dump(2) + "\n");
        if (flags.json) {
          out << j.dump(2) << '\n';
        } else {
          out << "n_states,users,hmm,bihmm\n";
          for (const auto& g : rep.groups)
            out << g.n_states << ',' << g.users << ',' << format_double(g.hmm) << ',' << format_double(g.bihmm) << '\n';
          out << "mean,," << format_double(rep.hmm_mean) << ',' << format_double(rep.bihmm_mean) << '\n';
        }
        return kOk;
      }
      const auto rep = run_stream_simulation(ds, cfg, !sim_no_expansion);
      const auto text = report_json(rep).dump(2) + "\n";
      if (!sim_out.empty()) write_text(sim_out, text);
      out << (flags.json ? text : report_table(rep));
      return kOk;
    }

    if (*sweepc) {
      const auto ds = sweep_src.load();
      const auto param = sweep_param == "window" ? SweepParameter::window_size : SweepParameter::lambda_s;
      auto values = sweep_values;
      if (values.empty()) values = param == SweepParameter::window_size ? default_window_grid() : default_lambda_grid();
      const auto rep = sweep(ds, cfg, param, values);
      out << (flags.json ? report_json(rep).dump(2) + "\n" : sweep_csv(rep));
      return kOk;
    }

    if (*bench) {
      Dataset ds;
      if (bench_users) {
        SyntheticSpec s;
        s.seed = cfg.seed;
        s.consumers = bench_users;
        s.categories = 20;
        s.home_categories = 3;
        s.steps = 15;
        s.producers = 200;
        s.items_per_step = 2;
        ds = synthetic_dataset(generate_synthetic(s));
      } else {
        ds = bench_src.load();
      }
      const auto rep = bench_dataset(ds, cfg, bench_queries, cfg.harness.max_k());
      if (flags.json) {
        out << latency_json(rep).dump(2) << '\n';
      } else {
        out << "users " << rep.users << ", items " << rep.items << ", k " << rep.k << '\n'
            << "knn_query mean " << format_double(rep.knn.mean_us, 1) << " us, median "
            << format_double(rep.knn.median_us, 1) << " us\n"
            << "brute force mean " << format_double(rep.brute.mean_us, 1) << " us, median "
            << format_double(rep.brute.median_us, 1) << " us\n"
            << "speedup " << format_double(rep.speedup, 2) << ", mismatches " << rep.mismatches << '\n';
      }
      return rep.mismatches == 0 ? kOk : kIntegrity;
    }

    if (*synth) {
      spec.seed = cfg.seed;
      const auto data = generate_synthetic(spec);
      std::filesystem::create_directories(synth_out);
      const auto log = bundle_file(synth_out, "interactions.jsonl");
      const auto items = bundle_file(synth_out, "items.jsonl");
      write_synthetic(data, log, items);
      if (flags.json) {
        out << nlohmann::json{{"schema", "ssrec-synth"}, {"version", 1}, {"interactions", data.interactions.size()},
                              {"items", data.items.size()}, {"interactions_path", log}, {"items_path", items}}
                   .dump()
            << '\n';
      } else {
        out << "wrote " << data.interactions.size() << " interactions to " << log << " and " << data.items.size()
            << " items to " << items << '\n';
      }
      return kOk;
    }
  } catch (const ConfigError& e) {
    err << "error: " << e.what() << '\n';
    return kUsage;
  } catch (const IntegrityError& e) {
    err << "integrity error: " << e.what() << '\n';
    return kIntegrity;
  } catch (const DataError& e) {
    err << "data error: " << e.what() << '\n';
    return kData;
  } catch (const std::exception& e) {
    err << "data error: " << e.what() << '\n';
    return kData;
  }
  return kUsage;
}

inline int run(int argc, char** argv, std::ostream& out = std::cout, std::ostream& err = std::cerr) {
  std::vector<std::string> args;
  args.reserve(static_cast<std::size_t>(argc));
  for (int i = 1; i < argc; ++i) args.emplace_back(argv[i]);
  return run(std::move(args), out, err);
}

}  // namespace ssrec::cli

#endif  // SSREC_CLI_HPP
