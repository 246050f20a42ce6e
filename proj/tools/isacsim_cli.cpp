// Command-line driver for the simulation experiments. Every subcommand is a
// pure function of (config, seed): re-running with the same inputs rewrites
// byte-identical outputs.

#include <cstdint>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <sstream>
#include <string>
#include <vector>

#include "CLI11.hpp"

#include "isacsim/beamforming.hpp"
#include "isacsim/calibration.hpp"
#include "isacsim/experiment.hpp"
#include "isacsim/omp.hpp"
#include "isacsim/training.hpp"

namespace fs = std::filesystem;

namespace {

struct Common {
  std::string config;
  std::string preset = "desk";
  std::uint64_t seed = 1;
  std::string out = "out";
};

void add_common(CLI::App* sub, Common& c) {
  sub->add_option("--config", c.config, "Config file, applied on top of the preset");
  sub->add_option("--preset", c.preset, "Parameter preset")
      ->check(CLI::IsMember({"paper", "desk"}));
  sub->add_option("--seed", c.seed, "Run seed");
  sub->add_option("--out", c.out, "Output directory");
}

isac::ExperimentConfig make_config(const Common& c) {
  isac::ExperimentConfig base = c.preset == "paper" ? isac::ExperimentConfig::paper()
                                                    : isac::ExperimentConfig::desk();
  if (!c.config.empty()) base = isac::load_config(c.config, base);
  return base;
}

fs::path prepare_out(const Common& c) {
  fs::path dir(c.out);
  fs::create_directories(dir);
  return dir;
}

isac::RVec read_spacings_csv(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("cannot open spacings file " + path);
  std::string line;
  if (!std::getline(in, line)) throw std::runtime_error("empty spacings file " + path);
  std::vector<double> values;
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    auto comma = line.find(',');
    if (comma == std::string::npos)
      throw std::runtime_error("bad spacings row in " + path + ": " + line);
    values.push_back(std::stod(line.substr(comma + 1)));
  }
  if (values.empty()) throw std::runtime_error("no spacings in " + path);
  isac::RVec v(static_cast<int>(values.size()));
  for (size_t i = 0; i < values.size(); ++i) v(static_cast<int>(i)) = values[i];
  return v;
}

isac::SystemModels load_models(const isac::ExperimentConfig& cfg, const std::string& imp_path,
                               const std::string& dict_path, const std::string& spacings_path) {
  isac::SystemModels models{cfg.true_array()};
  if (!imp_path.empty()) {
    isac::TrainState s = isac::load_checkpoint(imp_path);
    if (s.params.mode != isac::LearnMode::kImpairment)
      throw std::runtime_error("--impairment-checkpoint does not hold spacing parameters");
    models.impairment = s.params;
  }
  if (!dict_path.empty()) {
    isac::TrainState s = isac::load_checkpoint(dict_path);
    if (s.params.mode != isac::LearnMode::kDictionary)
      throw std::runtime_error("--dictionary-checkpoint does not hold a dictionary");
    models.dictionary = s.params;
  }
  if (!spacings_path.empty()) models.calibrated_spacings_m = read_spacings_csv(spacings_path);
  return models;
}

int cmd_simulate(const Common& c) {
  isac::ExperimentConfig cfg = make_config(c);
  fs::path out = prepare_out(c);
  isac::ArrayModel truth = cfg.true_array();
  const isac::TrainConfig& tc = cfg.train;
  isac::RVec grid = tc.angle_grid();
  isac::SteeringDictionary dict = steering_matrix(truth, grid);
  isac::DelayDictionary dd = build_delay_dictionary(
      tc.ofdm, tc.n_range, tc.sensing_prior.range_min_m, tc.sensing_prior.range_max_m);
  isac::CVec f_r = synthesize_beam(dict, tc.sensing_prior.theta_min_rad,
                                   tc.sensing_prior.theta_max_rad);
  isac::CVec f = isac::isac_combine(f_r, f_r, 1.0, 0.0, tc.ofdm.power_w).f;

  isac::Rng rng = isac::Rng::stream(c.seed, 0);
  isac::SensingScene scene =
      isac::sample_sensing_scene(tc.sensing_prior, tc.t_max, tc.ofdm, rng, 1);
  isac::SymbolBlock symbols = isac::sample_symbols(tc.ofdm.subcarriers, rng);
  isac::CMat y = isac::sensing_observation(scene, truth, f, symbols, tc.ofdm, rng);
  isac::CMat filtered = isac::matched_filter(y, symbols);
  isac::DetectionResult det =
      isac::omp_known_count(filtered, dict, dd, static_cast<int>(scene.targets.size()));

  isac::write_scene_csv((out / "scene.csv").string(), scene);
  isac::write_detections_csv((out / "detections.csv").string(), det);
  isac::write_manifest(out.string(), cfg, c.seed, {"scene.csv", "detections.csv"});
  std::cout << "simulate: " << scene.targets.size() << " targets, " << det.detections.size()
            << " detections -> " << out.string() << "\n";
  return 0;
}

int cmd_map_dump(const Common& c) {
  isac::ExperimentConfig cfg = make_config(c);
  fs::path out = prepare_out(c);
  isac::ArrayModel truth = cfg.true_array();
  const isac::TrainConfig& tc = cfg.train;
  isac::RVec grid = tc.angle_grid();
  isac::SteeringDictionary dict = steering_matrix(truth, grid);
  isac::DelayDictionary dd = build_delay_dictionary(
      tc.ofdm, tc.n_range, tc.sensing_prior.range_min_m, tc.sensing_prior.range_max_m);
  isac::CVec f_r = synthesize_beam(dict, tc.sensing_prior.theta_min_rad,
                                   tc.sensing_prior.theta_max_rad);
  isac::CVec f = isac::isac_combine(f_r, f_r, 1.0, 0.0, tc.ofdm.power_w).f;

  isac::Rng rng = isac::Rng::stream(c.seed, 0);
  isac::SensingScene scene =
      isac::sample_sensing_scene(tc.sensing_prior, tc.t_max, tc.ofdm, rng, 1);
  isac::SymbolBlock symbols = isac::sample_symbols(tc.ofdm.subcarriers, rng);
  isac::CMat y = isac::sensing_observation(scene, truth, f, symbols, tc.ofdm, rng);
  isac::CMat filtered = isac::matched_filter(y, symbols);
  isac::AngleDelayMap map = isac::angle_delay_map(filtered, dict, dd);

  isac::write_map_csv((out / "map.csv").string(), map, grid, dd.range_grid);
  isac::write_scene_csv((out / "scene.csv").string(), scene);
  isac::write_manifest(out.string(), cfg, c.seed, {"map.csv", "scene.csv"});
  std::cout << "map-dump: " << map.values.rows() << " x " << map.values.cols() << " map -> "
            << out.string() << "\n";
  return 0;
}

int cmd_train(const Common& c, const std::string& mode_str, const std::string& ckpt_flag,
              bool resume) {
  isac::ExperimentConfig cfg = make_config(c);
  fs::path out = prepare_out(c);
  isac::LearnMode mode = mode_str == "dictionary" ? isac::LearnMode::kDictionary
                                                  : isac::LearnMode::kImpairment;
  isac::TrainConfig tc = cfg.train_for(mode);
  isac::ArrayModel truth = cfg.true_array();

  std::string ckpt = ckpt_flag.empty()
                         ? (out / ("checkpoint-" + mode_str + ".json")).string()
                         : ckpt_flag;
  isac::TrainState state =
      resume ? isac::load_checkpoint(ckpt) : isac::make_initial_state(mode, tc);

  isac::TrainOptions opt;
  opt.seed = c.seed;
  opt.checkpoint_path = ckpt;
  opt.progress = [](std::int64_t it, const isac::LossValue& loss) {
    std::printf("iter %6lld  loss %.6g  (sensing %.6g, comm %.6g)\n",
                static_cast<long long>(it), loss.total, loss.sensing, loss.comm);
  };
  isac::TrainResult res = isac::train(state, tc, truth, opt);

  std::string loss_name = "loss-" + mode_str + ".csv";
  isac::write_loss_csv((out / loss_name).string(), res.loss_history);
  isac::write_manifest(out.string(), cfg, c.seed,
                       {loss_name, fs::path(ckpt).filename().string()});
  if (!res.loss_history.empty())
    std::cout << "train(" << mode_str << "): final loss " << res.loss_history.back()
              << ", checkpoint " << ckpt << "\n";
  return 0;
}

int cmd_calibrate(const Common& c) {
  isac::ExperimentConfig cfg = make_config(c);
  fs::path out = prepare_out(c);
  isac::ArrayModel truth = cfg.true_array();
  isac::CalibrationReport report = isac::calibrate(cfg.calibration(), truth, c.seed);

  isac::write_calibration_csv((out / "calibration.csv").string(), report);
  std::vector<std::vector<std::string>> rows;
  for (int i = 0; i < report.spacings_m.size(); ++i)
    rows.push_back({std::to_string(i), isac::fmt_g17(report.spacings_m(i))});
  isac::write_csv((out / "calibrated_spacings.csv").string(), {"gap", "spacing_m"}, rows);
  isac::write_manifest(out.string(), cfg, c.seed,
                       {"calibration.csv", "calibrated_spacings.csv"},
                       {{"calibration_scores", {report.initial_score, report.final_score}}});
  std::cout << "calibrate: score " << report.initial_score << " -> " << report.final_score
            << "\n";
  return 0;
}

int cmd_roc(const Common& c, const std::string& imp, const std::string& dict,
            const std::string& spacings) {
  isac::ExperimentConfig cfg = make_config(c);
  fs::path out = prepare_out(c);
  isac::SystemModels models = load_models(cfg, imp, dict, spacings);

  isac::RocResult roc = isac::run_roc(cfg, models, c.seed);
  isac::write_roc_csv((out / "roc.csv").string(), roc);
  std::vector<isac::SensingEvalRow> rows = isac::run_sensing_eval(cfg, models, c.seed);
  isac::write_sensing_eval_csv((out / "sensing_eval.csv").string(), rows);

  std::vector<double> grid(roc.thresholds.data(), roc.thresholds.data() + roc.thresholds.size());
  isac::write_manifest(out.string(), cfg, c.seed, {"roc.csv", "sensing_eval.csv"},
                       {{"roc_thresholds", grid}});
  std::cout << "roc: " << roc.rows.size() << " curve rows, " << rows.size()
            << " sensing rows -> " << out.string() << "\n";
  return 0;
}

int cmd_isac_sweep(const Common& c, const std::string& imp, const std::string& dict,
                   const std::string& spacings) {
  isac::ExperimentConfig cfg = make_config(c);
  fs::path out = prepare_out(c);
  isac::SystemModels models = load_models(cfg, imp, dict, spacings);
  std::vector<isac::IsacSweepRow> rows = isac::run_isac_sweep(cfg, models, c.seed);
  isac::write_isac_sweep_csv((out / "isac_sweep.csv").string(), rows);
  isac::write_manifest(out.string(), cfg, c.seed, {"isac_sweep.csv"});
  std::cout << "isac-sweep: " << rows.size() << " rows -> " << out.string() << "\n";
  return 0;
}

int cmd_generalize(const Common& c, const std::string& imp, const std::string& dict,
                   const std::string& spacings) {
  isac::ExperimentConfig cfg = make_config(c);
  fs::path out = prepare_out(c);
  isac::SystemModels models = load_models(cfg, imp, dict, spacings);
  std::vector<isac::GeneralizationRow> rows = isac::run_generalization(cfg, models, c.seed);
  isac::write_generalization_csv((out / "generalization.csv").string(), rows);
  isac::write_manifest(out.string(), cfg, c.seed, {"generalization.csv"});
  std::cout << "generalize: " << rows.size() << " rows -> " << out.string() << "\n";
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"OFDM sensing/communication simulation under array imperfections"};
  app.set_version_flag("--version", isac::version_string());
  app.require_subcommand(1);

  Common c_sim, c_map, c_train, c_cal, c_roc, c_sweep, c_gen;
  std::string train_mode = "impairment", train_ckpt;
  bool train_resume = false;
  std::string roc_imp, roc_dict, roc_spc;
  std::string sweep_imp, sweep_dict, sweep_spc;
  std::string gen_imp, gen_dict, gen_spc;

  CLI::App* sim = app.add_subcommand("simulate", "Sample one scene and run the greedy receiver");
  add_common(sim, c_sim);

  CLI::App* map = app.add_subcommand("map-dump", "Write the angle-delay map of one scene");
  add_common(map, c_map);

  CLI::App* tr = app.add_subcommand("train", "Learn spacings or a dictionary by gradient descent");
  add_common(tr, c_train);
  tr->add_option("--mode", train_mode, "What to learn")
      ->check(CLI::IsMember({"impairment", "dictionary"}));
  tr->add_option("--checkpoint", train_ckpt, "Checkpoint path (default inside --out)");
  tr->add_flag("--resume", train_resume, "Continue from the checkpoint");

  CLI::App* cal = app.add_subcommand("calibrate", "Greedy per-spacing calibration search");
  add_common(cal, c_cal);

  CLI::App* roc = app.add_subcommand("roc", "Detection operating curves and sensing evaluation");
  add_common(roc, c_roc);
  roc->add_option("--impairment-checkpoint", roc_imp, "Trained spacing checkpoint");
  roc->add_option("--dictionary-checkpoint", roc_dict, "Trained dictionary checkpoint");
  roc->add_option("--calibrated-spacings", roc_spc, "calibrated_spacings.csv from calibrate");

  CLI::App* sweep = app.add_subcommand("isac-sweep", "Sensing/communication trade-off sweep");
  add_common(sweep, c_sweep);
  sweep->add_option("--impairment-checkpoint", sweep_imp, "Trained spacing checkpoint");
  sweep->add_option("--dictionary-checkpoint", sweep_dict, "Trained dictionary checkpoint");
  sweep->add_option("--calibrated-spacings", sweep_spc, "calibrated_spacings.csv from calibrate");

  CLI::App* gen = app.add_subcommand("generalize", "Sensing far from the training sectors");
  add_common(gen, c_gen);
  gen->add_option("--impairment-checkpoint", gen_imp, "Trained spacing checkpoint");
  gen->add_option("--dictionary-checkpoint", gen_dict, "Trained dictionary checkpoint");
  gen->add_option("--calibrated-spacings", gen_spc, "calibrated_spacings.csv from calibrate");

  CLI11_PARSE(app, argc, argv);

  try {
    if (sim->parsed()) return cmd_simulate(c_sim);
    if (map->parsed()) return cmd_map_dump(c_map);
    if (tr->parsed()) return cmd_train(c_train, train_mode, train_ckpt, train_resume);
    if (cal->parsed()) return cmd_calibrate(c_cal);
    if (roc->parsed()) return cmd_roc(c_roc, roc_imp, roc_dict, roc_spc);
    if (sweep->parsed()) return cmd_isac_sweep(c_sweep, sweep_imp, sweep_dict, sweep_spc);
    if (gen->parsed()) return cmd_generalize(c_gen, gen_imp, gen_dict, gen_spc);
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  }
  return 0;
}
