// SPDX-License-Identifier: Apache-2.0
//
// thermotwin <verb> [flags]. Exit codes: 0 success, 1 domain error, 2 usage error.
#include <omp.h>

#include <atomic>
#include <chrono>
#include <csignal>
#include <cstdio>
#include <fstream>
#include <iostream>
#include <thread>

#include "CLI11.hpp"
#include "json.hpp"
#include "thermotwin/assistant.hpp"
#include "thermotwin/error.hpp"
#include "thermotwin/gateway.hpp"
#include "thermotwin/gru.hpp"
#include "thermotwin/pipeline.hpp"
#include "thermotwin/plant.hpp"
#include "thermotwin/telemetry.hpp"
#include "thermotwin/twin.hpp"

using namespace thermotwin;
using nlohmann::json;

namespace {

std::atomic<bool> g_stop{false};

void on_signal(int) { g_stop = true; }

void write_json(const std::string &path, const json &j) {
  if (path.empty() || path == "-") {
    std::cout << j.dump(2) << '\n';
    return;
  }
  std::ofstream out(path);
  if (!out) throw Error(Errc::CorruptFile, "cannot write " + path);
  out << j.dump(2) << '\n';
}

json read_json_file(const std::string &path) {
  std::ifstream in(path);
  if (!in) throw Error(Errc::InvalidConfig, "cannot open " + path);
  try {
    return json::parse(in);
  } catch (const json::exception &e) {
    throw Error(Errc::ParseError, path + ": " + e.what());
  }
}

json metrics_json(const GroupMetrics &m) {
  auto g = [](const GroupError &e) {
    return json{{"mae", e.mae}, {"rmse", e.rmse}, {"count", e.count}};
  };
  return {{"temperature_K", g(m.temperature)}, {"pressure_kPa", g(m.pressure)},
          {"flow_kg_s", g(m.flow)},            {"power_kW", g(m.power)},
          {"actuator_pct", g(m.actuator)}};
}

SensorFrame frame_from_json(const json &j) {
  SensorFrame f;
  f.t = j.value("t", 0.0);
  f.demand_elec = j.value("demand_elec", 0.0);
  for (const auto &[k, v] : j.at("values").items()) f.values[k] = v.get<double>();
  if (j.contains("actuators"))
    for (const auto &[k, v] : j.at("actuators").items()) f.actuators[k] = v.get<double>();
  if (j.contains("aux"))
    for (const auto &[k, v] : j.at("aux").items()) f.aux[k] = v.get<double>();
  return f;
}

struct Prepared {
  Dataset data;
  SplitRanges split;
  NormStats norm;
  WindowSet train, valid, test;
};

Prepared prepare(const std::string &csv) {
  Prepared p;
  p.data = pack_dataset(read_dataset(csv));
  p.split = split_sequential(p.data.size());
  p.norm = fit_norm(p.data, p.split.train);
  p.train = make_window_set(make_windows(p.split.train, p.data), p.norm);
  p.valid = make_window_set(make_windows(p.split.valid, p.data), p.norm);
  p.test = make_window_set(make_windows(p.split.test, p.data), p.norm);
  return p;
}

// Flag values fall back to the --config file, then to built-in defaults.
TrainConfig train_defaults(const std::string &config_path) {
  if (config_path.empty()) return {};
  const json j = read_json_file(config_path);
  if (!j.contains("train")) return {};
  return load_train_config(config_path);
}

PlantConfig plant_defaults(const std::string &config_path) {
  return config_path.empty() ? PlantConfig{} : load_plant_config(config_path);
}

struct TrainFlags {
  std::size_t hidden = 256, layers = 2, batch = 128;
  double lr = 1e-3, weight_decay = 1e-5;
  int patience = 100, epochs = 2000;
  std::uint64_t seed = 0;
  std::vector<CLI::Option *> opts;

  void add(CLI::App *app) {
    opts = {
        app->add_option("--hidden", hidden, "GRU hidden size")
            ->check(CLI::IsMember({128, 256, 512, 1024}))
            ->capture_default_str(),
        app->add_option("--layers", layers, "stacked GRU layers")
            ->check(CLI::IsMember({1, 2, 3}))
            ->capture_default_str(),
        app->add_option("--batch", batch, "mini-batch size")->check(CLI::PositiveNumber)
            ->capture_default_str(),
        app->add_option("--lr", lr, "initial learning rate")->check(CLI::PositiveNumber)
            ->capture_default_str(),
        app->add_option("--weight-decay", weight_decay, "decoupled weight decay")
            ->check(CLI::NonNegativeNumber)
            ->capture_default_str(),
        app->add_option("--patience", patience, "early-stopping patience in epochs")
            ->check(CLI::PositiveNumber)
            ->capture_default_str(),
        app->add_option("--epochs", epochs, "maximum epochs")->check(CLI::PositiveNumber)
            ->capture_default_str(),
        app->add_option("--seed", seed, "initialization and shuffling seed")
            ->capture_default_str(),
    };
  }

  TrainConfig resolve(const std::string &config_path) const {
    TrainConfig c = train_defaults(config_path);
    auto given = [&](std::size_t i) { return opts[i]->count() > 0; };
    if (given(0)) c.hidden = hidden;
    if (given(1)) c.layers = layers;
    if (given(2)) c.batch = batch;
    if (given(3)) c.lr = lr;
    if (given(4)) c.weight_decay = weight_decay;
    if (given(5)) c.early_stop_patience = patience;
    if (given(6)) c.max_epochs = epochs;
    if (given(7)) c.seed = seed;
    c.validate();
    return c;
  }
};

}  // namespace

int main(int argc, char **argv) {
  CLI::App app{"Digital-twin workbench for a three-loop thermal-fluid facility"};
  app.require_subcommand(1);
  std::string config_path;
  app.add_option("--config", config_path, "JSON file with plant/scenario/train sections")
      ->check(CLI::ExistingFile);
  int threads = 0;
  app.add_option("--threads", threads, "OpenMP threads (0 = runtime default)");

  // simulate
  auto *sim = app.add_subcommand("simulate", "Run a plant scenario and write its trajectory");
  std::string sim_scenario = "staircase", sim_out = "trajectory.csv";
  bool sim_noise = false;
  sim->add_option("--scenario", sim_scenario, "scenario JSON file, or preset staircase|demand")
      ->capture_default_str();
  sim->add_option("--out", sim_out, "output CSV")->capture_default_str();
  sim->add_flag("--noise", sim_noise, "enable sensor noise (presets only)");

  // gen-dataset
  auto *gen = app.add_subcommand("gen-dataset", "Generate a demand-following training dataset");
  std::size_t gen_steps = 3706;
  std::uint64_t gen_seed = 0;
  std::string gen_out = "dataset.csv";
  bool gen_quiet = false;
  gen->add_option("--steps", gen_steps, "1 Hz frames to generate")
      ->check(CLI::Range(std::size_t{50}, std::size_t{1000000}))
      ->capture_default_str();
  gen->add_option("--seed", gen_seed, "demand profile and noise seed")->capture_default_str();
  gen->add_option("--out", gen_out, "output CSV")->capture_default_str();
  gen->add_flag("--no-noise", gen_quiet, "disable sensor noise");

  // train
  auto *trn = app.add_subcommand("train", "Train the GRU surrogate");
  TrainFlags train_flags;
  train_flags.add(trn);
  std::string trn_data, trn_out = "model.gru.json", trn_history;
  trn->add_option("--data", trn_data, "dataset CSV")->required()->check(CLI::ExistingFile);
  trn->add_option("--out", trn_out, "checkpoint path")->capture_default_str();
  trn->add_option("--history", trn_history, "per-epoch history CSV");
  bool trn_verbose = false;
  trn->add_flag("-v,--verbose", trn_verbose, "print every epoch");

  // evaluate
  auto *evl = app.add_subcommand("evaluate", "Group error metrics on the test split");
  std::string evl_model, evl_data, evl_out;
  evl->add_option("--model", evl_model, "checkpoint")->required()->check(CLI::ExistingFile);
  evl->add_option("--data", evl_data, "dataset CSV")->required()->check(CLI::ExistingFile);
  evl->add_option("--out", evl_out, "metrics JSON (stdout when omitted)");

  // sweep
  auto *swp = app.add_subcommand("sweep", "Hidden size x depth sweep");
  TrainFlags sweep_flags;
  sweep_flags.add(swp);
  std::string swp_data, swp_out = "sweep.csv", swp_summary;
  std::vector<std::size_t> swp_hidden = {128, 256, 512, 1024}, swp_layers = {1, 2, 3};
  int swp_jobs = 1;
  swp->add_option("--data", swp_data, "dataset CSV")->required()->check(CLI::ExistingFile);
  swp->add_option("--out", swp_out, "results CSV")->capture_default_str();
  swp->add_option("--summary", swp_summary, "JSON summary with the flagged cell");
  swp->add_option("--grid-hidden", swp_hidden, "hidden sizes")
      ->check(CLI::IsMember({128, 256, 512, 1024}))
      ->capture_default_str();
  swp->add_option("--grid-layers", swp_layers, "layer counts")
      ->check(CLI::IsMember({1, 2, 3}))
      ->capture_default_str();
  swp->add_option("--jobs", swp_jobs, "OpenMP threads for the sweep")->capture_default_str();

  // twin
  auto *twn = app.add_subcommand("twin", "Autoregressive rollout for a demand step");
  std::string twn_model, twn_report, twn_traj, twn_data;
  double twn_demand = 1.889;
  RolloutOptions twn_opts;
  std::uint64_t twn_seed = 0;
  bool twn_oracle = false;
  twn->add_option("--model", twn_model, "checkpoint")->required()->check(CLI::ExistingFile);
  twn->add_option("--demand", twn_demand, "electric demand, kW")
      ->check(CLI::NonNegativeNumber)
      ->capture_default_str();
  twn->add_option("--report", twn_report, "report JSON (stdout when omitted)");
  twn->add_option("--trajectory", twn_traj, "predicted trajectory CSV");
  twn->add_option("--data", twn_data,
                  "dataset CSV whose last 30 frames seed the window (default: idle plant)");
  twn->add_option("--max-steps", twn_opts.max_steps, "rollout limit")->capture_default_str();
  twn->add_option("--eps", twn_opts.eps, "steady-state tolerance, normalized units per step")
      ->capture_default_str();
  twn->add_option("--window", twn_opts.window, "steady-state window, steps")
      ->check(CLI::Range(std::size_t{2}, std::size_t{100000}))
      ->capture_default_str();
  twn->add_option("--seed", twn_seed, "noise seed of the idle history")->capture_default_str();
  twn->add_flag("--oracle", twn_oracle, "also report the plant simulator's steady state");

  // serve
  auto *srv = app.add_subcommand("serve", "Telemetry server with the plant and optional twin");
  int srv_port = 4840, srv_http = 8080;
  std::string srv_host = "127.0.0.1", srv_model, srv_token, srv_backend;
  bool srv_plant = false, srv_twin = false, srv_quiet = false;
  double srv_duration = 0.0, srv_speed = 1.0;
  std::uint64_t srv_seed = 0;
  srv->add_option("--port", srv_port, "line-protocol TCP port (0 = any)")->capture_default_str();
  srv->add_option("--http-port", srv_http, "HTTP gateway port (0 = any, -1 = off)")
      ->capture_default_str();
  srv->add_option("--host", srv_host, "listen address")->capture_default_str();
  auto *plant_flag = srv->add_flag("--plant", srv_plant, "serve the plant simulator (default)");
  srv->add_flag("--twin", srv_twin, "also publish twin expectations (needs --model)")
      ->excludes(plant_flag);
  srv->add_option("--model", srv_model, "checkpoint for --twin")->check(CLI::ExistingFile);
  srv->add_option("--duration", srv_duration, "seconds to run, 0 = until interrupted")
      ->capture_default_str();
  srv->add_option("--speed", srv_speed, "simulated seconds per wall second")
      ->check(CLI::PositiveNumber)
      ->capture_default_str();
  srv->add_option("--seed", srv_seed, "sensor noise seed")->capture_default_str();
  srv->add_option("--token", srv_token, "require this token from clients");
  srv->add_option("--backend", srv_backend, "assistant backend URL or 'fallback'");
  srv->add_flag("--no-noise", srv_quiet, "disable sensor noise");

  // assist
  auto *ast = app.add_subcommand("assist", "Ask the operator assistant");
  std::string ast_backend, ast_query, ast_frame, ast_model, ast_connect, ast_json;
  double ast_demand = -1.0;
  ast->add_option("--backend", ast_backend, "chat endpoint base URL, or 'fallback'");
  ast->add_option("--query", ast_query, "question")->required();
  ast->add_option("--frame", ast_frame, "frame JSON (default: idle plant reading)")
      ->check(CLI::ExistingFile);
  ast->add_option("--connect", ast_connect, "read the live frame from host:port");
  ast->add_option("--model", ast_model, "checkpoint for the twin expectation block")
      ->check(CLI::ExistingFile);
  ast->add_option("--demand", ast_demand, "demand for the twin block, kW");
  ast->add_option("--advisory", ast_json, "write the rule-based advisory JSON here");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError &e) {
    return app.exit(e) == 0 ? 0 : 2;
  }
  if (threads > 0) omp_set_num_threads(threads);

  try {
    if (sim->parsed()) {
      const PlantConfig pc = plant_defaults(config_path);
      Scenario sc;
      if (sim_scenario == "staircase") {
        sc = staircase_scenario();
        sc.noise_enabled = sim_noise;
      } else if (sim_scenario == "demand") {
        sc = demand_scenario(3706, 0, sim_noise);
      } else {
        sc = load_scenario(sim_scenario);
      }
      const Trajectory traj = run_scenario(pc, sc);
      write_dataset(sim_out, traj);
      std::cout << "wrote " << traj.size() << " frames to " << sim_out << '\n';
    } else if (gen->parsed()) {
      const PlantConfig pc = plant_defaults(config_path);
      const Trajectory traj = run_scenario(pc, demand_scenario(gen_steps, gen_seed, !gen_quiet));
      write_dataset(gen_out, traj);
      std::cout << "wrote " << traj.size() << " frames to " << gen_out << '\n';
    } else if (trn->parsed()) {
      const TrainConfig tc = train_flags.resolve(config_path);
      const Prepared p = prepare(trn_data);
      std::cerr << "train " << tc.hidden << "x" << tc.layers << " on " << p.train.count
                << " windows, validate on " << p.valid.count << '\n';
      const auto t0 = std::chrono::steady_clock::now();
      const TrainResult r = train(p.train, p.valid, p.norm, tc, [&](const EpochRecord &e) {
        if (trn_verbose)
          std::fprintf(stderr, "epoch %4d  train %.6f  valid %.6f  lr %.2e\n", e.epoch,
                       e.train_loss, e.valid_loss, e.lr);
      });
      save_checkpoint(r.model, trn_out);
      if (!trn_history.empty()) write_history_csv(trn_history, r.history);
      const GroupMetrics m = evaluate(r.model, p.test);
      std::cerr << "epochs " << r.history.size() << ", best " << r.best_epoch << " (valid "
                << r.best_valid << "), "
                << std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count()
                << " s\n";
      std::cout << metrics_json(m).dump(2) << '\n';
    } else if (evl->parsed()) {
      std::vector<std::string> warnings;
      const GruModel model = load_checkpoint(evl_model, &warnings);
      for (const auto &w : warnings) std::cerr << "warning: " << w << '\n';
      const Prepared p = prepare(evl_data);
      write_json(evl_out, metrics_json(evaluate(model, p.test)));
    } else if (swp->parsed()) {
      if (swp_jobs > 0) omp_set_num_threads(swp_jobs);
      const TrainConfig base = sweep_flags.resolve(config_path);
      const Prepared p = prepare(swp_data);
      const SweepResult r = sweep(swp_hidden, swp_layers, p.train, p.valid, p.norm, base);
      write_sweep_csv(swp_out, r);
      json rows = json::array();
      for (const auto &row : r.rows)
        rows.push_back({{"hidden", row.hidden},
                        {"layers", row.layers},
                        {"final_train_loss", row.train_loss},
                        {"best_epoch_train_loss", row.best_train_loss},
                        {"valid_loss", row.valid_loss},
                        {"param_count", row.param_count},
                        {"epochs", row.epochs},
                        {"error", row.error ? json(*row.error) : json(nullptr)}});
      json summary = {{"rows", rows},
                      {"adopted", {{"hidden", r.adopted_hidden}, {"layers", r.adopted_layers}}}};
      summary["best"] = r.best ? json{{"hidden", r.rows[*r.best].hidden},
                                      {"layers", r.rows[*r.best].layers},
                                      {"valid_loss", r.rows[*r.best].valid_loss}}
                               : json(nullptr);
      if (!swp_summary.empty()) write_json(swp_summary, summary);
      if (r.best)
        std::cout << "best validation: " << r.rows[*r.best].hidden << "x"
                  << r.rows[*r.best].layers << "; adopted default: " << r.adopted_hidden << "x"
                  << r.adopted_layers << '\n';
    } else if (twn->parsed()) {
      std::vector<std::string> warnings;
      const GruModel model = load_checkpoint(twn_model, &warnings);
      for (const auto &w : warnings) std::cerr << "warning: " << w << '\n';
      const PlantConfig pc = plant_defaults(config_path);
      const Trajectory history = twn_data.empty()
                                     ? cold_start_history(pc, model.dims.input_steps, twn_seed)
                                     : read_dataset(twn_data);
      omp_set_num_threads(1);
      InferenceEngine engine(model);
      const RolloutResult r =
          rollout(engine, history_window(history, model.dims.input_steps), twn_demand, twn_opts);
      json report = speedup_report(r);
      if (twn_oracle) {
        const PlantSteady s = plant_steady_state(pc, twn_demand);
        json finals = json::object();
        for (const auto &[k, v] : s.frame.values) finals[k] = v;
        report["oracle"] = {{"converged", s.converged}, {"seconds", s.seconds}, {"final_values", finals}};
      }
      write_json(twn_report, report);
      if (!twn_traj.empty()) write_dataset(twn_traj, r.trajectory);
    } else if (srv->parsed()) {
      if (srv_twin && srv_model.empty())
        throw CLI::ValidationError("--twin", "requires --model");
      const PlantConfig pc = plant_defaults(config_path);
      Namespace ns;
      DriverOptions dopt;
      dopt.speed = srv_speed;
      dopt.noise_enabled = !srv_quiet;
      dopt.seed = srv_seed;
      PlantDriver plant(ns, pc, idle_state(pc), dopt);
      std::optional<GruModel> model;
      std::unique_ptr<TwinDriver> twin;
      if (srv_twin) {
        model = load_checkpoint(srv_model);
        twin = std::make_unique<TwinDriver>(ns, plant, *model, TwinDriver::Options{});
      }
      ServerOptions sopt;
      sopt.host = srv_host;
      sopt.port = static_cast<std::uint16_t>(srv_port);
      sopt.token = srv_token;
      TelemetryServer server(ns, sopt);
      BackendConfig backend = BackendConfig::from_env();
      if (!srv_backend.empty()) backend.base_url = srv_backend;
      Gateway gateway(ns, &plant, twin.get(), backend);

      plant.start();
      if (twin) twin->start();
      server.start();
      if (srv_http >= 0) gateway.start(srv_host, srv_http);
      json ready = {{"port", server.port()}, {"http_port", srv_http >= 0 ? gateway.port() : -1},
                    {"twin", static_cast<bool>(twin)}};
      std::cout << ready.dump() << std::endl;

      std::signal(SIGINT, on_signal);
      std::signal(SIGTERM, on_signal);
      const auto until = std::chrono::steady_clock::now() +
                         std::chrono::duration<double>(srv_duration > 0 ? srv_duration : 1e9);
      while (!g_stop && std::chrono::steady_clock::now() < until)
        std::this_thread::sleep_for(std::chrono::milliseconds(50));

      gateway.stop();
      server.stop();
      if (twin) twin->stop();
      plant.stop();
      std::cout << json{{"ticks", server.ticks()}, {"deadline_misses", server.deadline_misses()}}
                       .dump()
                << std::endl;
    } else if (ast->parsed()) {
      const PlantConfig pc = plant_defaults(config_path);
      SensorFrame frame;
      if (!ast_frame.empty()) {
        frame = frame_from_json(read_json_file(ast_frame));
      } else if (!ast_connect.empty()) {
        const auto colon = ast_connect.rfind(':');
        if (colon == std::string::npos)
          throw CLI::ValidationError("--connect", "expected host:port");
        TelemetryClient client(ast_connect.substr(0, colon),
                               static_cast<std::uint16_t>(std::stoi(ast_connect.substr(colon + 1))));
        const auto &cat = canonical_catalog();
        auto value = [&](const std::string &id) {
          const json r = client.request({{"op", "read"}, {"node", id}});
          if (!r.value("ok", false)) throw Error(Errc::UnknownNode, id);
          return r.at("value").get<double>();
        };
        for (const auto &id : cat.measured()) frame.values[id] = value(id);
        for (auto id : kActuatorIds) frame.actuators[std::string(id)] = value(std::string(id));
        for (auto id : kAuxiliaryIds) frame.aux[std::string(id)] = value(std::string(id));
        frame.demand_elec = value(std::string(kDemandId));
      } else {
        frame = cold_start_history(pc, 1, 0).back();
      }
      std::optional<TwinExpectation> twin;
      if (!ast_model.empty()) {
        const GruModel model = load_checkpoint(ast_model);
        const double demand = ast_demand >= 0.0 ? ast_demand : frame.demand_elec;
        const RolloutResult r = rollout(
            model, history_window(cold_start_history(pc, model.dims.input_steps, 0)), demand,
            {600, 1e-3, 30});
        twin = TwinExpectation{demand, r.trajectory.back()};
      }
      const DerivedMetrics derived = compute_derived(frame);
      const Prompt prompt = augment_query(ast_query, build_context(frame, derived, twin));
      const Advisory advisory = fallback_advise(frame, derived, twin);
      BackendConfig backend = BackendConfig::from_env();
      if (!ast_backend.empty()) backend.base_url = ast_backend;
      std::cout << infer(prompt, backend, [&] { return advisory.render(); });
      std::cout << '\n';
      if (!ast_json.empty()) write_json(ast_json, advisory.to_json());
    }
  } catch (const CLI::ParseError &e) {
    return app.exit(e) == 0 ? 0 : 2;
  } catch (const Error &e) {
    std::cerr << e.what() << '\n';
    return 1;
  } catch (const std::exception &e) {
    std::cerr << e.what() << '\n';
    return 1;
  }
  return 0;
}
