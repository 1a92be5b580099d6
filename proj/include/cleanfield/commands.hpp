#pragma once

#include <cmath>
#include <filesystem>
#include <fstream>
#include <iomanip>
#include <limits>
#include <optional>
#include <ostream>
#include <sstream>
#include <string>
#include <vector>

#include "cleanfield/config.hpp"
#include "cleanfield/field.hpp"
#include "cleanfield/io.hpp"
#include "cleanfield/metrics.hpp"
#include "cleanfield/render.hpp"
#include "cleanfield/scenes.hpp"
#include "cleanfield/train.hpp"

namespace cleanfield {

inline constexpr const char* kCheckpointName = "checkpoint.cfld";
inline constexpr const char* kTrainLogName = "train_log.csv";
inline constexpr const char* kMetricsName = "metrics.csv";
inline constexpr const char* kConfigEcho = "config.json";

namespace detail {

inline void ensure_dir(const std::string& dir) {
  std::error_code ec;
  std::filesystem::create_directories(dir, ec);
  if (ec) fail(ErrorKind::io, "cannot create " + dir + ": " + ec.message());
}

inline void write_text(const std::string& path, const std::string& text) {
  write_file_bytes(path, std::span<const std::uint8_t>(reinterpret_cast<const std::uint8_t*>(text.data()), text.size()));
}

inline std::string join(const std::string& dir, const char* name) {
  return (std::filesystem::path(dir) / name).string();
}

}  // namespace detail

/// Renders the ground-truth dataset and writes it with a config echo.
inline Dataset cmd_gen(const RunConfig& config, const std::string& out_dir) {
  const SceneOracle scene(config.scene);
  Dataset ds = make_dataset(scene, config.dataset);
  save_dataset(ds, out_dir);
  detail::write_text(detail::join(out_dir, kConfigEcho), echo_config(config));
  return ds;
}

struct ViewMetrics {
  std::size_t view_id = 0;
  double psnr = 0.0;
  double ssim = 0.0;
  double mae = 0.0;
};

struct MetricReport {
  std::vector<ViewMetrics> views;
  ViewMetrics mean;
  std::optional<double> floater_volume;
};

inline std::string format_metric(double v) {
  if (std::isinf(v)) return v > 0 ? "inf" : "-inf";
  std::ostringstream s;
  s << std::setprecision(10) << v;
  return s.str();
}

/// view_id,psnr,ssim,mae rows, a "mean" summary row, and a
/// "floater_volume" row when the dataset carries its scene.
inline std::string format_report(const MetricReport& r) {
  std::ostringstream out;
  out << "view_id,psnr,ssim,mae\n";
  for (const auto& v : r.views) {
    out << v.view_id << ',' << format_metric(v.psnr) << ',' << format_metric(v.ssim) << ',' << format_metric(v.mae)
        << '\n';
  }
  out << "mean," << format_metric(r.mean.psnr) << ',' << format_metric(r.mean.ssim) << ','
      << format_metric(r.mean.mae) << '\n';
  if (r.floater_volume) out << "floater_volume," << format_metric(*r.floater_volume) << ",,\n";
  return out.str();
}

template <class Real>
MetricReport evaluate(const VoxelField<Real>& field, const Dataset& ds, const RenderOptions& opts,
                      double floater_threshold) {
  const auto test_ids = ds.split(false);
  if (test_ids.empty()) fail(ErrorKind::empty_split, "dataset has no test views");
  MetricReport report;
  double psnr_sum = 0.0, ssim_sum = 0.0, mae_sum = 0.0;
  for (std::size_t id : test_ids) {
    const Image img = render_image(field, ds.views[id].camera, opts);
    ViewMetrics m{id, psnr(img, ds.views[id].image), ssim(img, ds.views[id].image), mae(img, ds.views[id].image)};
    psnr_sum += m.psnr;
    ssim_sum += m.ssim;
    mae_sum += m.mae;
    report.views.push_back(m);
  }
  const double n = static_cast<double>(test_ids.size());
  report.mean = {0, psnr_sum / n, ssim_sum / n, mae_sum / n};
  if (ds.scene) report.floater_volume = floater_volume(field, SceneOracle(*ds.scene), floater_threshold);
  return report;
}

struct TrainOutcome {
  VoxelField<float> field;
  std::vector<LossBreakdown> log;
  MetricReport metrics;
};

/// Trains on a dataset directory and writes checkpoint, log, test metrics
/// and the config echo into out_dir.
inline TrainOutcome cmd_train(const RunConfig& config, const std::string& dataset_dir, const std::string& out_dir,
                              const TrainProgress& progress = {}) {
  const Dataset ds = load_dataset(dataset_dir);
  detail::ensure_dir(out_dir);
  detail::write_text(detail::join(out_dir, kConfigEcho), echo_config(config));
  TrainResult<float> trained = train<float>(ds, config.train, config.field, progress);
  save_checkpoint(trained.field, detail::join(out_dir, kCheckpointName));
  {
    std::ostringstream log;
    write_training_log(log, trained.log);
    detail::write_text(detail::join(out_dir, kTrainLogName), log.str());
  }
  TrainOutcome outcome{std::move(trained.field), std::move(trained.log), {}};
  if (!ds.split(false).empty()) {
    outcome.metrics = evaluate(outcome.field, ds, config.render_options(), config.eval.floater_threshold);
    detail::write_text(detail::join(out_dir, kMetricsName), format_report(outcome.metrics));
  }
  return outcome;
}

inline Image cmd_render(const RunConfig& config, const std::string& checkpoint, const CameraPose& camera,
                        const std::string& out_path, bool vi_only) {
  const VoxelField<float> field = load_checkpoint<float>(checkpoint);
  RenderOptions opts = config.render_options();
  opts.mode = vi_only ? RenderMode::vi_only : RenderMode::full;
  const Image img = render_image(field, camera, opts);
  write_ppm(img, out_path);
  return img;
}

inline MetricReport cmd_eval(const RunConfig& config, const std::string& checkpoint, const std::string& dataset_dir) {
  const VoxelField<float> field = load_checkpoint<float>(checkpoint);
  const Dataset ds = load_dataset(dataset_dir);
  return evaluate(field, ds, config.render_options(), config.eval.floater_threshold);
}

/// Applies the geometry correction to every profile row. Writes the
/// corrected rows to out_path and, if any rows exist, a before/after
/// chart to plot_path.
inline std::vector<DensityProfile> cmd_correct(const CorrectionParams& params, const std::string& in_path,
                                               const std::string& out_path, const std::string& plot_path) {
  validate_correction(params);
  std::ifstream in(in_path);
  if (!in) fail(ErrorKind::io, "cannot open " + in_path);
  std::vector<DensityProfile> rows;
  try {
    rows = parse_profiles(in);
  } catch (const Error& e) {
    throw Error(e.kind(), in_path + ": " + e.what());
  }
  std::vector<DensityProfile> corrected;
  corrected.reserve(rows.size());
  for (const auto& r : rows) corrected.push_back(correct_density(r, params));
  std::ostringstream out;
  write_profiles(out, corrected);
  detail::write_text(out_path, out.str());
  if (!rows.empty() && !plot_path.empty()) write_ppm(plot_profiles(rows, corrected), plot_path);
  return corrected;
}

}  // namespace cleanfield
