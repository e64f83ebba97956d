#include "spt/evaluation.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <exception>
#include <limits>
#include <thread>

#include "spt/errors.hpp"

namespace spt {
namespace {

constexpr double kNaN = std::numeric_limits<double>::quiet_NaN();

std::size_t threshold_index(const std::vector<double>& thresholds, double alpha) {
  for (std::size_t i = 0; i < thresholds.size(); ++i)
    if (std::abs(thresholds[i] - alpha) <= 1e-12) return i;
  return thresholds.size();
}

std::string percent(double rate) {
  if (std::isnan(rate)) return "-";
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.2f", 100.0 * rate);
  return buf;
}

std::string number(const char* format, double v) {
  char buf[48];
  std::snprintf(buf, sizeof buf, format, v);
  return buf;
}

std::string render_table(const std::vector<std::string>& header, const std::vector<std::vector<std::string>>& rows) {
  std::vector<std::size_t> width(header.size());
  for (std::size_t c = 0; c < header.size(); ++c) {
    width[c] = header[c].size();
    for (const auto& r : rows) width[c] = std::max(width[c], r[c].size());
  }
  auto line = [&](const std::vector<std::string>& cells) {
    std::string out;
    for (std::size_t c = 0; c < cells.size(); ++c) {
      const std::string pad(width[c] - cells[c].size(), ' ');
      out += c == 0 ? cells[c] + pad : pad + cells[c];
      out += c + 1 < cells.size() ? "  " : "\n";
    }
    return out;
  };
  std::string out = line(header);
  std::size_t total = 0;
  for (auto w : width) total += w;
  out += std::string(total + 2 * (width.size() - 1), '-') + "\n";
  for (const auto& r : rows) out += line(r);
  return out;
}

}  // namespace

std::string to_string(Decoder d) { return d == Decoder::refined ? "refined" : "argmax"; }

Decoder parse_decoder(std::string_view text) {
  if (text == "refined") return Decoder::refined;
  if (text == "argmax") return Decoder::argmax;
  throw ConfigError("unknown decoder '" + std::string(text) + "' (expected refined or argmax)");
}

Point decode_heatmap(const Tensor& heatmap, std::size_t image_h, std::size_t image_w, Decoder decoder) {
  if (heatmap.rank() != 2) throw DimensionError("decode_heatmap: expected [H x W], got " + shape_to_string(heatmap.shape()));
  const std::size_t h = heatmap.dim(0), w = heatmap.dim(1);
  const auto data = heatmap.data();
  const auto best = static_cast<std::size_t>(std::max_element(data.begin(), data.end()) - data.begin());
  const std::size_t r = best / w, c = best % w;
  double x = static_cast<double>(c), y = static_cast<double>(r);
  if (decoder == Decoder::refined) {
    if (c > 0 && c + 1 < w) {
      const double d = heatmap.at(r, c + 1) - heatmap.at(r, c - 1);
      x += d > 0.0 ? 0.25 : d < 0.0 ? -0.25 : 0.0;
    }
    if (r > 0 && r + 1 < h) {
      const double d = heatmap.at(r + 1, c) - heatmap.at(r - 1, c);
      y += d > 0.0 ? 0.25 : d < 0.0 ? -0.25 : 0.0;
    }
  }
  return {x * static_cast<double>(image_w) / static_cast<double>(w),
          y * static_cast<double>(image_h) / static_cast<double>(h)};
}

std::vector<Point> decode_heatmaps(const Tensor& heatmaps, std::size_t image_h, std::size_t image_w, Decoder decoder) {
  if (heatmaps.rank() != 3) {
    throw DimensionError("decode_heatmaps: expected [J x H x W], got " + shape_to_string(heatmaps.shape()));
  }
  std::vector<Point> out;
  for (std::size_t j = 0; j < heatmaps.dim(0); ++j)
    out.push_back(decode_heatmap(select(heatmaps, j), image_h, image_w, decoder));
  return out;
}

double PckhReport::mean_at(double alpha) const {
  const auto i = threshold_index(thresholds, alpha);
  if (i == thresholds.size()) throw ContractError("PCKh was not evaluated at alpha " + std::to_string(alpha));
  return means[i];
}

const std::vector<double>& PckhReport::rates_at(double alpha) const {
  const auto i = threshold_index(thresholds, alpha);
  if (i == thresholds.size()) throw ContractError("PCKh was not evaluated at alpha " + std::to_string(alpha));
  return rates[i];
}

PckhReport pckh(const std::vector<std::vector<Point>>& preds, const std::vector<Annotation>& anns,
                const std::vector<double>& thresholds, std::vector<std::string> joint_names) {
  if (preds.size() != anns.size()) {
    throw DimensionError("pckh: " + std::to_string(preds.size()) + " predictions for " +
                         std::to_string(anns.size()) + " annotations");
  }
  if (anns.empty()) throw ConfigError("pckh: no samples to evaluate");
  if (thresholds.empty()) throw ConfigError("pckh: no thresholds");
  for (double a : thresholds)
    if (!(a > 0.0)) throw ConfigError("pckh: thresholds must be positive");
  const std::size_t joints = anns.front().joints.size();
  for (std::size_t i = 0; i < anns.size(); ++i) {
    if (anns[i].joints.size() != joints || anns[i].visible.size() != joints || preds[i].size() != joints) {
      throw DimensionError("pckh: sample " + std::to_string(i) + " does not have " + std::to_string(joints) +
                           " joints");
    }
  }
  if (joint_names.empty()) {
    for (std::size_t j = 0; j < joints; ++j) joint_names.push_back("j" + std::to_string(j));
  }
  if (joint_names.size() != joints) throw DimensionError("pckh: joint name count does not match");

  PckhReport r;
  r.joint_names = std::move(joint_names);
  r.thresholds = thresholds;
  r.samples = anns.size();
  r.visible_counts.assign(joints, 0);
  std::vector<std::vector<std::size_t>> correct(thresholds.size(), std::vector<std::size_t>(joints, 0));
  for (std::size_t i = 0; i < anns.size(); ++i) {
    for (std::size_t j = 0; j < joints; ++j) {
      if (!anns[i].visible[j]) continue;
      ++r.visible_counts[j];
      const double dist = std::hypot(preds[i][j].first - anns[i].joints[j].first,
                                     preds[i][j].second - anns[i].joints[j].second);
      for (std::size_t t = 0; t < thresholds.size(); ++t)
        if (dist <= thresholds[t] * anns[i].head_size) ++correct[t][j];
    }
  }
  for (std::size_t t = 0; t < thresholds.size(); ++t) {
    std::vector<double> rates(joints, kNaN);
    double total = 0.0;
    std::size_t counted = 0;
    for (std::size_t j = 0; j < joints; ++j) {
      if (r.visible_counts[j] == 0) continue;
      rates[j] = static_cast<double>(correct[t][j]) / static_cast<double>(r.visible_counts[j]);
      total += rates[j];
      ++counted;
    }
    r.rates.push_back(std::move(rates));
    r.means.push_back(counted ? total / static_cast<double>(counted) : kNaN);
  }
  return r;
}

void to_json(nlohmann::json& j, const PckhReport& r) {
  auto finite_or_null = [](double v) { return std::isnan(v) ? nlohmann::json(nullptr) : nlohmann::json(v); };
  j = nlohmann::json{{"samples", r.samples}, {"joint_names", r.joint_names}, {"visible_counts", r.visible_counts}};
  auto& per = j["thresholds"] = nlohmann::json::array();
  for (std::size_t t = 0; t < r.thresholds.size(); ++t) {
    nlohmann::json rates = nlohmann::json::object();
    for (std::size_t k = 0; k < r.joint_names.size(); ++k) rates[r.joint_names[k]] = finite_or_null(r.rates[t][k]);
    per.push_back({{"alpha", r.thresholds[t]}, {"mean", finite_or_null(r.means[t])}, {"per_joint", rates}});
  }
}

std::string format_pckh_table(const std::vector<std::pair<std::string, PckhReport>>& rows,
                              std::string_view label_header, double primary) {
  if (rows.empty()) return {};
  std::vector<std::string> header{std::string(label_header)};
  for (const auto& n : rows.front().second.joint_names) header.push_back(n);
  header.push_back("Mean");
  header.push_back("Mean@0.1");
  std::vector<std::vector<std::string>> body;
  for (const auto& [label, report] : rows) {
    std::vector<std::string> cells{label};
    for (double r : report.rates_at(primary)) cells.push_back(percent(r));
    cells.push_back(percent(report.mean_at(primary)));
    const auto i = threshold_index(report.thresholds, 0.1);
    cells.push_back(i < report.thresholds.size() ? percent(report.means[i]) : "-");
    body.push_back(std::move(cells));
  }
  return render_table(header, body);
}

Evaluation evaluate(const PoseModelParams& params, const ModelConfig& config, const JointMask& joint_mask,
                    const std::vector<Sample>& samples, const std::vector<double>& thresholds, Decoder decoder,
                    const std::vector<std::string>& joint_names) {
  if (samples.empty()) throw ConfigError("evaluate: empty dataset");
  Evaluation ev;
  ev.predictions.resize(samples.size());
  std::vector<std::exception_ptr> errors(samples.size());
  std::vector<SparsityStats> stats(samples.size());
  auto run = [&](std::size_t i) {
    try {
      const auto out = forward(samples[i].image, params, config, joint_mask);
      ev.predictions[i] = decode_heatmaps(out.heatmaps, config.image_h, config.image_w, decoder);
      stats[i] = out.diagnostics.sparsity;
    } catch (...) {
      errors[i] = std::current_exception();
    }
  };
  const std::size_t workers = std::min(worker_threads(), samples.size());
  if (workers <= 1) {
    for (std::size_t i = 0; i < samples.size(); ++i) run(i);
  } else {
    std::vector<std::thread> pool;
    for (std::size_t w = 0; w < workers; ++w)
      pool.emplace_back([&, w] {
        for (std::size_t i = w; i < samples.size(); i += workers) run(i);
      });
    for (auto& t : pool) t.join();
  }
  for (const auto& e : errors)
    if (e) std::rethrow_exception(e);
  std::vector<Annotation> anns;
  for (const auto& s : samples) anns.push_back(s.annotation);
  ev.report = pckh(ev.predictions, anns, thresholds, joint_names);
  ev.sparsity = stats.front();
  return ev;
}

std::vector<SweepRow> ablation_sweep(const std::vector<double>& akr_values, const SweepSettings& settings,
                                     const SkeletonSpec& skeleton, const std::vector<Sample>& train,
                                     const std::vector<Sample>& test) {
  for (double akr : akr_values)
    if (!(akr > 0.0 && akr <= 1.0)) throw ConfigError("akr " + std::to_string(akr) + " is outside (0, 1]");
  const auto joint_mask = compile_joint_mask(skeleton);
  const auto samples = make_training_samples(train, settings.model, settings.target_sigma);
  std::vector<SweepRow> rows;
  for (double akr : akr_values) {
    ModelConfig config = settings.model;
    config.schedule.akr = akr;
    config.validate();
    auto params = PoseModelParams::init(config, settings.init_seed);
    SweepRow row;
    row.akr = akr;
    train_model(params, config, joint_mask, samples, settings.training,
                [&](std::size_t, double loss) { row.final_loss = loss; });
    const auto ev = evaluate(params, config, joint_mask, test, settings.thresholds, settings.decoder, skeleton.names);
    row.report = ev.report;
    row.sparsity = ev.sparsity;
    rows.push_back(std::move(row));
  }
  return rows;
}

std::string format_sweep_table(const std::vector<SweepRow>& rows, double primary) {
  std::vector<std::pair<std::string, PckhReport>> labelled;
  std::vector<std::vector<std::string>> sparsity;
  for (const auto& r : rows) {
    const auto label = number("AKR=%.2f", r.akr);
    labelled.emplace_back(label, r.report);
    sparsity.push_back({label, std::to_string(r.sparsity.stages), number("%.6f", r.sparsity.layer_weighted_density),
                        number("%.6f", r.sparsity.mac_ratio), number("%.6e", r.final_loss)});
  }
  return format_pckh_table(labelled, "Method", primary) + "\n" +
         render_table({"Method", "Stages", "Density", "MAC ratio", "Final loss"}, sparsity);
}

void to_json(nlohmann::json& j, const SweepRow& r) {
  j = nlohmann::json{{"akr", r.akr}, {"pckh", r.report}, {"sparsity", r.sparsity}, {"final_loss", r.final_loss}};
}

}  // namespace spt
