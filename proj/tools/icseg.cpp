// icseg: scenario generation, training, evaluation and interactive play.

#include <unistd.h>

#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <map>
#include <memory>
#include <string>
#include <vector>

#include <CLI11.hpp>

#include "icseg/icseg.hpp"

namespace fs = std::filesystem;
using namespace icseg;

namespace {

struct Common {
  std::string config_file;
  std::vector<std::string> sets;
};

void add_common(CLI::App* app, Common& c) {
  app->add_option("--config", c.config_file, "JSON config file");
  app->add_option("--set", c.sets, "override a config key, key=value (repeatable)");
}

// defaults < file < environment < explicit flags
RunConfig build_config(const Common& c, const std::map<std::string, std::string>& flags) {
  RunConfig cfg;
  if (!c.config_file.empty()) cfg.merge_file(c.config_file);
  cfg.merge_env();
  for (const auto& kv : c.sets) {
    const auto eq = kv.find('=');
    if (eq == std::string::npos) throw ConfigError("--set expects key=value, got '" + kv + "'");
    cfg.set_text(kv.substr(0, eq), kv.substr(eq + 1));
  }
  for (const auto& [k, v] : flags) cfg.set_text(k, v);
  return cfg;
}

// Flags that map onto config keys; only the ones actually passed override.
class FlagSet {
 public:
  void add(CLI::App* app, const std::string& flag, const std::string& key, const std::string& help) {
    auto holder = std::make_shared<std::string>();
    entries_.push_back({key, holder, app->add_option(flag, *holder, help)});
  }

  std::map<std::string, std::string> collect() const {
    std::map<std::string, std::string> out;
    for (const auto& e : entries_)
      if (e.opt->count() > 0) out[e.key] = *e.value;
    return out;
  }

 private:
  struct Entry {
    std::string key;
    std::shared_ptr<std::string> value;
    CLI::Option* opt;
  };
  std::vector<Entry> entries_;
};

ScenarioSource make_source(const RunConfig& cfg) {
  ScenarioSource src;
  const auto pack = cfg.get<std::string>("pack");
  if (!pack.empty()) {
    src.pack = load_pack(pack);
  } else {
    src.generator = cfg.generator();
    src.tiers = cfg.tiers();
  }
  return src;
}

fs::path checkpoint_path(const fs::path& dir, std::int64_t step) {
  char name[32];
  std::snprintf(name, sizeof name, "ckpt-%06lld.json", static_cast<long long>(step));
  return dir / name;
}

void dump_diagnostic(const fs::path& log_dir, const Trainer& tr, const std::string& what) {
  Json j;
  j["error"] = what;
  j["step"] = tr.step_index();
  Json groups = Json::array();
  for (const auto& g : tr.last_groups()) {
    Json jg;
    jg["scene_seed"] = g.scene != nullptr ? g.scene->seed : 0;
    jg["mean"] = g.stats.mean;
    jg["stddev"] = g.stats.stddev;
    Json trajs = Json::array();
    for (const auto& t : g.trajectories) {
      Json jt = trajectory_to_json(t);
      jt["factors"] = t.factors;
      trajs.push_back(jt);
    }
    jg["trajectories"] = trajs;
    groups.push_back(jg);
  }
  j["groups"] = groups;
  const auto p = log_dir / "diagnostic.json";
  write_file_atomic(p, j.dump(1) + "\n");
  std::cerr << "diagnostic dump written to " << p.string() << "\n";
}

// --- subcommands ------------------------------------------------------------

int cmd_gen(const Common& common, const FlagSet& flags, int simple, int medium, int difficult,
            const std::string& out) {
  const RunConfig cfg = build_config(common, flags.collect());
  const auto schema = AttributeSchema::standard();
  const auto opt = cfg.generator();
  const auto seed = cfg.get<std::uint64_t>("seed");
  std::vector<Scene> pack;
  const std::pair<DifficultyTier, int> plan[] = {
      {DifficultyTier::Simple, simple}, {DifficultyTier::Medium, medium}, {DifficultyTier::Difficult, difficult}};
  for (const auto& [tier, n] : plan) {
    if (n < 0) throw ConfigError("tier counts must be >= 0");
    for (int i = 0; i < n; ++i)
      pack.push_back(generate_scene(schema, tier, mix_seed({seed, static_cast<std::uint64_t>(tier), static_cast<std::uint64_t>(i)}), opt));
  }
  if (pack.empty()) throw ConfigError("nothing to generate: all tier counts are 0");
  write_file_atomic(out, dump_pack(pack));
  for (const auto& [tier, n] : plan) std::cout << tier_name(tier) << " " << n << "\n";
  std::cout << "total " << pack.size() << " -> " << out << "\n";
  return 0;
}

int cmd_train(const Common& common, const FlagSet& flags, const std::string& resume) {
  const RunConfig cfg = build_config(common, flags.collect());
  const HiGrpoConfig hc = cfg.higrpo();
  ScenarioSource src = make_source(cfg);
  const fs::path ckpt_dir = cfg.get<std::string>("checkpoint_dir");
  const fs::path log_dir = cfg.get<std::string>("log_dir");
  const int every = cfg.get<int>("checkpoint_every");
  if (every < 1) throw ConfigError("checkpoint_every must be >= 1");
  fs::create_directories(log_dir);

  Policy policy = [&] {
    if (!resume.empty()) {
      Policy p = load_checkpoint(resume);
      if (!(p.shape() == src.shape())) throw ConfigError("resumed checkpoint does not match the scenario shape");
      return p;
    }
    Policy p = Policy::initial(src.shape(), cfg.get<int>("hidden"), hc.seed);
    const auto w = cfg.warmup();
    if (w.steps > 0) {
      const double ll = warm_up_grounding(p, src, w);
      std::cerr << "grounding warm-up: " << w.steps << " steps, final mean log-likelihood " << format_real(ll) << "\n";
    }
    return p;
  }();

  const fs::path csv = log_dir / "dynamics.csv";
  const bool append = !resume.empty() && fs::exists(csv);
  std::ofstream log(csv, append ? std::ios::app : std::ios::trunc);
  if (!log) throw DataError("cannot write " + csv.string());
  if (!append) log << kDynamicsHeader << "\n";

  Trainer tr(hc, std::move(src), std::move(policy));
  if (tr.finished()) std::cerr << "checkpoint already at total_steps; nothing to do\n";
  int clamped = 0;
  try {
    while (!tr.finished()) {
      const StepStats st = tr.step();
      clamped += st.clamped;
      log << dynamics_row(st) << "\n";
      log.flush();
      const std::int64_t done = tr.step_index();
      if (done % every == 0 || tr.finished())
        save_checkpoint(checkpoint_path(ckpt_dir, done), tr.policy(), hc.lambda_at(done));
    }
  } catch (const NumericalError& e) {
    dump_diagnostic(log_dir, tr, e.what());
    throw;
  }
  if (clamped > 0) std::cerr << "warning: " << clamped << " rollouts hit an empty candidate set (clamped to 1)\n";
  std::cout << checkpoint_path(ckpt_dir, tr.step_index()).string() << "\n";
  return 0;
}

int cmd_eval(const Common& common, const FlagSet& flags, const std::string& ckpt, const std::string& pack_path,
             const std::string& out, const std::string& samples_out) {
  const RunConfig cfg = build_config(common, flags.collect());
  const Policy policy = load_checkpoint(ckpt);
  const auto pack = load_pack(pack_path);
  EvalOptions eo;
  eo.sim.noise_rate = cfg.get<double>("noise");
  if (!(eo.sim.noise_rate >= 0 && eo.sim.noise_rate <= 1)) throw ConfigError("noise must lie in [0, 1]");
  eo.sim.seed = cfg.get<std::uint64_t>("eval_seed");
  eo.max_turns = cfg.get<int>("max_turns");
  eo.alpha = cfg.get<double>("alpha");
  eo.thresholds = cfg.thresholds();
  eo.boundary_tolerance = cfg.get<double>("boundary_tolerance");
  eo.timing = cfg.get<bool>("timing");
  const EvalResult r = evaluate(policy, pack, eo);
  const std::string report = report_json(r.report).dump(1) + "\n";
  if (out.empty())
    std::cout << report;
  else
    write_file_atomic(out, report);
  if (!samples_out.empty()) {
    std::string lines;
    for (const auto& s : r.samples) lines += sample_json(s).dump() + "\n";
    write_file_atomic(samples_out, lines);
  }
  return 0;
}

int cmd_play(const std::string& ckpt, const std::string& pack_path, int index, const std::string& transcript) {
  if (!isatty(STDIN_FILENO)) {
    std::cerr << "play needs an interactive terminal on stdin; for scripted answers use `icseg eval`\n";
    return static_cast<int>(ExitCode::Config);
  }
  const Policy policy = load_checkpoint(ckpt);
  const auto pack = load_pack(pack_path);
  if (index < 0 || index >= static_cast<int>(pack.size())) throw ConfigError("scene index out of range");
  const Scene& scene = pack[static_cast<std::size_t>(index)];
  std::cout << render_scene(scene) << "\nYou are the user. Answer for the object marked '*'.\n";

  auto ask = [&](int attr, int k) {
    const auto& a = scene.schema.attributes[static_cast<std::size_t>(attr)];
    for (;;) {
      std::cout << "Q" << k << ": what is the target's " << a.name << "? [0-" << a.domain_size - 1 << "] " << std::flush;
      std::string line;
      if (!std::getline(std::cin, line)) throw DataError("input closed during the session");
      try {
        std::size_t used = 0;
        const int v = std::stoi(line, &used);
        if (used == line.size() && v >= 0 && v < a.domain_size) return v;
      } catch (const std::exception&) {
      }
      std::cout << "  please enter a value between 0 and " << a.domain_size - 1 << "\n";
    }
  };
  const PlayOutcome o = play_session(policy, scene, ask);
  const auto& c = o.trajectory.commit;
  const auto& r = o.trajectory.reward;
  std::cout << "\ncommit: frame " << c.keyframe << " box [" << c.box.x1 << " " << c.box.y1 << " " << c.box.x2 << " "
            << c.box.y2 << "] point (" << c.point.x << ", " << c.point.y << ")\n";
  std::cout << "rewards: iou " << r.r_iou << " box " << r.r_box << " point " << r.r_point << " keyframe "
            << format_real(r.r_keyframe) << " ent " << format_real(r.r_ent) << " eff " << format_real(r.r_eff)
            << (r.clamped ? " (empty candidate set clamped)" : "") << "\n";
  std::cout << "J " << format_real(o.J) << " F " << format_real(o.F) << " J&F " << format_real(0.5 * (o.J + o.F))
            << "\n";
  std::ofstream log(transcript, std::ios::app);
  if (!log) throw DataError("cannot append to " + transcript);
  log << transcript_json(scene, o).dump() << "\n";
  return 0;
}

int cmd_inspect(const std::string& path) {
  const fs::path p = path;
  if (p.extension() == ".jsonl") {
    std::ifstream in(p);
    if (!in) throw DataError("cannot open " + path);
    std::string line;
    int n = 0;
    while (std::getline(in, line)) {
      if (line.empty()) continue;
      std::cout << parse_json(line, path + " line " + std::to_string(n + 1)).dump(1) << "\n";
      ++n;
    }
    std::cout << n << " records\n";
    return 0;
  }
  if (p.extension() == ".csv") {
    std::cout << read_file(p);
    return 0;
  }
  const Json j = parse_json(read_file(p), path);
  if (j.is_array()) {
    const auto pack = load_pack(p);
    int counts[3] = {0, 0, 0};
    for (const auto& s : pack) ++counts[static_cast<int>(s.tier)];
    std::cout << "scenario pack: " << pack.size() << " scenes, grid " << pack.front().grid << ", "
              << pack.front().frames << " frames\n";
    for (int t = 0; t < 3; ++t) std::cout << "  " << tier_name(static_cast<DifficultyTier>(t)) << " " << counts[t] << "\n";
    std::cout << render_scene(pack.front());
    return 0;
  }
  if (j.is_object() && j.contains("format")) {
    CheckpointMeta m;
    const Policy pol = load_checkpoint(p, &m);
    std::cout << "checkpoint step " << m.step << " lambda " << format_real(m.lambda) << "\n"
              << "  input " << pol.params().input_dim << " hidden " << m.hidden << " output " << pol.params().output
              << " (" << pol.params().count() << " weights)\n"
              << "  grid " << m.shape.grid << " frames " << m.shape.frames << " slots " << m.shape.max_objects << "\n";
    return 0;
  }
  std::cout << j.dump(1) << "\n";
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"icseg: interactive clarification and grounding lab"};
  app.require_subcommand(1);

  Common common;

  auto* gen = app.add_subcommand("gen", "generate a scenario pack");
  add_common(gen, common);
  int simple = 40, medium = 60, difficult = 50;
  std::string gen_out = "pack.json";
  FlagSet gen_flags;
  gen->add_option("--simple", simple, "Simple-tier scenes")->capture_default_str();
  gen->add_option("--medium", medium, "Medium-tier scenes")->capture_default_str();
  gen->add_option("--difficult", difficult, "Difficult-tier scenes")->capture_default_str();
  gen->add_option("-o,--out", gen_out, "output pack")->capture_default_str();
  gen_flags.add(gen, "--seed", "seed", "generator seed");
  gen_flags.add(gen, "--grid", "grid", "grid size S");

  auto* train = app.add_subcommand("train", "train a policy");
  add_common(train, common);
  FlagSet train_flags;
  std::string resume;
  train->add_option("--resume", resume, "continue from a checkpoint");
  for (const auto& [flag, key] : std::vector<std::pair<std::string, std::string>>{
           {"--seed", "seed"},
           {"--lambda0", "lambda0"},
           {"--alpha", "alpha"},
           {"--total-steps", "total_steps"},
           {"--learning-rate", "learning_rate"},
           {"--group-size", "group_size"},
           {"--scenes-per-step", "scenes_per_step"},
           {"--hidden", "hidden"},
           {"--warmup-steps", "warmup_steps"},
           {"--noise", "noise"},
           {"--pack", "pack"},
           {"--checkpoint-dir", "checkpoint_dir"},
           {"--log-dir", "log_dir"},
           {"--checkpoint-every", "checkpoint_every"}})
    train_flags.add(train, flag, key, key);

  auto* eval = app.add_subcommand("eval", "evaluate a checkpoint on a pack");
  add_common(eval, common);
  FlagSet eval_flags;
  std::string ckpt, pack_path, eval_out, samples_out;
  eval->add_option("--checkpoint", ckpt, "checkpoint metadata JSON")->required();
  eval->add_option("--pack", pack_path, "scenario pack")->required();
  eval->add_option("-o,--out", eval_out, "report JSON (stdout if omitted)");
  eval->add_option("--samples", samples_out, "per-sample JSONL");
  eval_flags.add(eval, "--noise", "noise", "simulator noise rate");
  eval_flags.add(eval, "--seed", "eval_seed", "simulator seed");
  eval_flags.add(eval, "--timing", "timing", "record wall time (true/false)");

  auto* play = app.add_subcommand("play", "answer the policy's questions yourself");
  std::string play_ckpt, play_pack, transcript = "session.jsonl";
  int index = 0;
  play->add_option("--checkpoint", play_ckpt, "checkpoint metadata JSON")->required();
  play->add_option("--pack", play_pack, "scenario pack")->required();
  play->add_option("--index", index, "scene index in the pack")->capture_default_str();
  play->add_option("--transcript", transcript, "session log (JSONL, appended)")->capture_default_str();

  auto* inspect = app.add_subcommand("inspect", "pretty-print a pack, checkpoint, CSV or JSONL log");
  std::string inspect_path;
  inspect->add_option("path", inspect_path)->required();

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int rc = app.exit(e);
    return rc == 0 ? 0 : static_cast<int>(ExitCode::Config);
  }

  try {
    if (gen->parsed()) return cmd_gen(common, gen_flags, simple, medium, difficult, gen_out);
    if (train->parsed()) return cmd_train(common, train_flags, resume);
    if (eval->parsed()) return cmd_eval(common, eval_flags, ckpt, pack_path, eval_out, samples_out);
    if (play->parsed()) return cmd_play(play_ckpt, play_pack, index, transcript);
    if (inspect->parsed()) return cmd_inspect(inspect_path);
  } catch (const Error& e) {
    std::cerr << "error: " << e.what() << "\n";
    return static_cast<int>(e.code());
  } catch (const PreconditionError& e) {
    std::cerr << "error: " << e.what() << "\n";
    return static_cast<int>(ExitCode::Config);
  } catch (const fs::filesystem_error& e) {
    std::cerr << "error: " << e.what() << "\n";
    return static_cast<int>(ExitCode::Data);
  }
  return 0;
}
