// cleanfield command-line entry point: gen, train, render, eval, correct.

#include <cstdlib>
#include <iostream>
#include <sstream>
#include <string>
#include <vector>

#include "CLI11.hpp"

#include "cleanfield/cleanfield.hpp"

namespace {

using namespace cleanfield;

int exit_code(ErrorKind kind) {
  switch (kind) {
    case ErrorKind::config: return 3;
    case ErrorKind::io: return 4;
    case ErrorKind::format: return 5;
    case ErrorKind::empty_split: return 6;
    default: return 1;
  }
}

struct Common {
  std::string config_path;
  std::optional<std::uint64_t> seed;
  unsigned threads = 0;
  bool no_decomposition = false;
  bool no_correction = false;

  RunConfig resolve() const {
    RunConfig c = config_path.empty() ? RunConfig{} : load_config(config_path);
    if (seed) {
      c.train.seed = *seed;
      c.dataset.seed = *seed;
    }
    if (no_decomposition) c.train.lambda_vi = c.train.lambda_vd = 0.0;
    if (no_correction) c.train.correction = false;
    if (threads) c.threads = threads;
    if (c.threads) set_thread_count(c.threads);
    return c;
  }
};

void add_common(CLI::App* cmd, Common& common, bool ablation_flags) {
  cmd->add_option("--config", common.config_path, "JSON run configuration")->check(CLI::ExistingFile);
  cmd->add_option("--seed", common.seed, "Override dataset and training seeds");
  cmd->add_option("--threads", common.threads, "Worker threads (default: CLEANFIELD_THREADS or all cores)");
  if (ablation_flags) {
    cmd->add_flag("--no-decomposition", common.no_decomposition, "Disable the vi/vd regularizers");
    cmd->add_flag("--no-correction", common.no_correction, "Disable geometry correction");
  }
}

CameraPose parse_look_at(const std::string& spec, const DatasetParams& params) {
  std::vector<double> v;
  std::stringstream ss(spec);
  std::string item;
  while (std::getline(ss, item, ',')) v.push_back(std::stod(item));
  if (v.size() != 6) fail(ErrorKind::invalid_input, "--look-at expects ex,ey,ez,tx,ty,tz");
  const double focal = 0.5 * params.width / std::tan(0.5 * params.fov_degrees * kPi / 180.0);
  return look_at({v[0], v[1], v[2]}, {v[3], v[4], v[5]}, {0, 1, 0}, params.width, params.height, focal);
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"cleanfield: voxel radiance fields with appearance decomposition and geometry correction"};
  app.require_subcommand(1);

  Common common;
  std::string out;

  auto* gen = app.add_subcommand("gen", "Render a synthetic ground-truth dataset");
  add_common(gen, common, false);
  gen->add_option("--out", out, "Dataset directory")->required();

  std::string dataset_dir;
  auto* train_cmd = app.add_subcommand("train", "Train a field on a dataset");
  add_common(train_cmd, common, true);
  train_cmd->add_option("dataset", dataset_dir, "Dataset directory")->required();
  train_cmd->add_option("--out", out, "Run directory")->required();
  bool quiet = false;
  train_cmd->add_flag("--quiet", quiet, "Suppress progress output");

  std::string checkpoint;
  std::size_t view_id = 0;
  std::string look;
  bool vi_only = false;
  auto* render = app.add_subcommand("render", "Render a checkpoint to PPM");
  add_common(render, common, true);
  render->add_option("checkpoint", checkpoint, "Checkpoint file")->required();
  render->add_option("--dataset", dataset_dir, "Dataset supplying the camera for --view");
  auto* view_opt = render->add_option("--view", view_id, "Dataset view id");
  render->add_option("--look-at", look, "Camera eye and target: ex,ey,ez,tx,ty,tz")->excludes(view_opt);
  render->add_option("--out", out, "Output PPM path")->required();
  render->add_flag("--vi-only", vi_only, "Composite the view-independent color only");

  auto* eval = app.add_subcommand("eval", "Evaluate a checkpoint on held-out views");
  add_common(eval, common, true);
  eval->add_option("checkpoint", checkpoint, "Checkpoint file")->required();
  eval->add_option("dataset", dataset_dir, "Dataset directory")->required();
  eval->add_option("--out", out, "Report path (default: stdout)");

  std::string profile_in, plot_path;
  std::optional<double> threshold;
  std::optional<int> margin;
  bool absolute = false;
  auto* correct = app.add_subcommand("correct", "Apply geometry correction to density profiles");
  add_common(correct, common, false);
  correct->add_option("profiles", profile_in, "Input profile file")->required();
  correct->add_option("--out", out, "Output profile file")->required();
  correct->add_option("--plot", plot_path, "Before/after chart (default: <out>.plot.ppm)");
  correct->add_option("--threshold", threshold, "Density threshold (fraction of the max unless --absolute)");
  correct->add_option("--margin", margin, "Samples kept around the salient window");
  correct->add_flag("--absolute", absolute, "Interpret --threshold as an absolute density");

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    std::cerr << "error: usage: " << e.what() << "\n";
    return 2;
  }

  try {
    const RunConfig config = common.resolve();
    if (*gen) {
      const Dataset ds = cmd_gen(config, out);
      std::cerr << "wrote " << ds.views.size() << " views to " << out << "\n";
    } else if (*train_cmd) {
      TrainProgress progress;
      if (!quiet) {
        progress = [&](int it, const LossBreakdown& l) {
          if ((it + 1) % 100 == 0 || it == 0) {
            std::cerr << "iter " << it + 1 << "/" << config.train.iterations << " total " << l.total << "\n";
          }
        };
      }
      const TrainOutcome r = cmd_train(config, dataset_dir, out, progress);
      if (!r.metrics.views.empty()) std::cout << format_report(r.metrics);
    } else if (*render) {
      CameraPose cam;
      if (!look.empty()) {
        cam = parse_look_at(look, config.dataset);
      } else {
        if (dataset_dir.empty()) fail(ErrorKind::invalid_input, "render needs --look-at or --dataset with --view");
        const Dataset ds = load_dataset(dataset_dir);
        if (view_id >= ds.views.size()) fail(ErrorKind::invalid_input, "view id out of range");
        cam = ds.views[view_id].camera;
      }
      cmd_render(config, checkpoint, cam, out, vi_only);
    } else if (*eval) {
      const std::string report = format_report(cmd_eval(config, checkpoint, dataset_dir));
      if (out.empty()) {
        std::cout << report;
      } else {
        write_file_bytes(out, std::span<const std::uint8_t>(reinterpret_cast<const std::uint8_t*>(report.data()),
                                                            report.size()));
      }
    } else if (*correct) {
      CorrectionParams params = config.train.correction_params;
      if (absolute) params.relative = false;
      if (threshold) params.threshold = *threshold;
      if (margin) params.margin = *margin;
      cmd_correct(params, profile_in, out, plot_path.empty() ? out + ".plot.ppm" : plot_path);
    }
  } catch (const Error& e) {
    std::cerr << "error: " << to_string(e.kind()) << ": " << e.what() << "\n";
    return exit_code(e.kind());
  } catch (const std::exception& e) {
    std::cerr << "error: internal: " << e.what() << "\n";
    return 1;
  }
  return 0;
}
