#include "entprog/supernet.hpp"

#include <algorithm>
#include <cmath>
#include <map>

#include "entprog/rng.hpp"

namespace entprog {

HoldoutSet make_holdout_set(const SyntheticDataset& data, const NoiseSchedule& sched, std::uint64_t seed) {
  HoldoutSet h;
  h.item_indices = data.holdout_indices();
  const auto n = static_cast<Eigen::Index>(h.item_indices.size());
  const Eigen::Index dim = data.images.rows();
  auto& in = h.input;
  in.x_tau.resize(dim, n);
  in.conditions.resize(2 * PoseCondition::kNumKeypoints, n);
  in.taus.resize(h.item_indices.size());
  in.use_null.assign(h.item_indices.size(), 0);
  h.eps.resize(dim, n);
  Rng rng(derive_seed(seed, {kStreamHoldout}));
  for (Eigen::Index j = 0; j < n; ++j) {
    const std::size_t item = h.item_indices[static_cast<std::size_t>(j)];
    const int tau = static_cast<int>(rng.below(static_cast<std::uint64_t>(sched.num_timesteps())));
    for (Eigen::Index k = 0; k < dim; ++k) h.eps(k, j) = rng.normal();
    in.taus[static_cast<std::size_t>(j)] = tau;
    in.conditions.col(j) = data.conditions[item].to_vector();
    in.x_tau.col(j) = forward_diffuse(to_model_space(data.images.col(static_cast<Eigen::Index>(item))), tau,
                                      h.eps.col(j), sched);
  }
  return h;
}

double holdout_eval(const BlockwiseDenoiser& model, const HoldoutSet& holdout, const SkipSet& skip) {
  if (holdout.size() == 0) throw ParameterError("holdout_eval: empty holdout set");
  const Matrix pred = model.forward(holdout.input, skip);
  double sum = 0.0;
  for (Eigen::Index j = 0; j < pred.cols(); ++j) sum += denoise_loss(pred.col(j), holdout.eps.col(j));
  return sum / static_cast<double>(pred.cols());
}

double quantize_loss(double loss) {
  constexpr double kScale = 0x1.0p40;
  return std::nearbyint(loss * kScale) / kScale;
}

CostModelClock::CostModelClock(double a, double b) : a_(a), b_(b) {
  if (!(a >= 0.0) || !(b >= 0.0) || !(a > 0.0 || b > 0.0))
    throw ParameterError("cost-model clock: need a, b >= 0 and not both zero");
}

double CostModelClock::finish_step(std::size_t trainable_params) {
  return a_ + b_ * static_cast<double>(trainable_params);
}

void WallClock::start_step() { start_ = std::chrono::steady_clock::now(); }

double WallClock::finish_step(std::size_t) {
  const auto d = std::chrono::steady_clock::now() - start_;
  // Never report a zero-length step.
  return std::max(std::chrono::duration<double>(d).count(), 1e-9);
}

ClockKind parse_clock_kind(const std::string& name) {
  if (name == "cost_model") return ClockKind::kCostModel;
  if (name == "wall") return ClockKind::kWall;
  throw ParameterError("unknown clock kind '" + name + "'");
}

std::string to_string(ClockKind kind) { return kind == ClockKind::kCostModel ? "cost_model" : "wall"; }

std::unique_ptr<StepClock> make_clock(const ClockConfig& config) {
  if (config.kind == ClockKind::kWall) return std::make_unique<WallClock>();
  return std::make_unique<CostModelClock>(config.a, config.b);
}

const CandidateEfficiency& CEReport::at(int m) const {
  for (const auto& c : candidates)
    if (c.m == m) return c;
  throw ParameterError("CE report has no candidate " + std::to_string(m));
}

double CEReport::total_delta() const {
  double s = 0.0;
  for (const auto& c : candidates) s += c.delta_loss;
  return s;
}

CEReport convergence_efficiency(std::span<const StepRecord> records, double initial_loss, std::span<const int> candidates) {
  if (records.empty()) throw AccountingError("convergence_efficiency: empty trace");
  std::map<int, CandidateEfficiency> acc;
  for (int m : candidates) acc[m].m = m;

  double prev_loss = initial_loss;
  std::size_t window_start = 0;
  for (std::size_t i = 0; i < records.size(); ++i) {
    const auto& r = records[i];
    if (r.step != static_cast<int>(i) + 1) throw AccountingError("convergence_efficiency: step indices not contiguous");
    if (!(r.wall_time > 0.0)) throw AccountingError("convergence_efficiency: non-positive step time");
    auto& c = acc[r.sampled_m];
    c.m = r.sampled_m;
    c.steps_taken += 1;
    c.total_time += r.wall_time;
    if (!r.evaluated) continue;

    const double delta = r.holdout_loss - prev_loss;
    if (window_start == i) {
      c.delta_loss += delta;
    } else {
      // Share the window's change by wall time; the last step takes the
      // remainder so the parts sum to delta exactly.
      double window_time = 0.0;
      for (std::size_t j = window_start; j <= i; ++j) window_time += records[j].wall_time;
      double assigned = 0.0;
      for (std::size_t j = window_start; j < i; ++j) {
        const double part = quantize_loss(delta * records[j].wall_time / window_time);
        acc[records[j].sampled_m].delta_loss += part;
        assigned += part;
      }
      c.delta_loss += delta - assigned;
    }
    prev_loss = r.holdout_loss;
    window_start = i + 1;
  }
  if (window_start != records.size()) throw AccountingError("convergence_efficiency: trace must end on an evaluated step");

  CEReport report;
  for (auto& [m, c] : acc) {
    if (c.steps_taken > 0) {
      if (!(c.total_time > 0.0)) throw AccountingError("convergence_efficiency: zero total time for candidate " + std::to_string(m));
      c.ce = -c.delta_loss / c.total_time;
    }
    report.candidates.push_back(c);
  }
  return report;
}

int select_candidate(CEReport& report) {
  const CandidateEfficiency* best = nullptr;
  for (const auto& c : report.candidates) {
    if (c.steps_taken == 0 || !std::isfinite(c.ce)) continue;
    if (!best || c.ce > best->ce || (c.ce == best->ce && c.m < best->m)) best = &c;
  }
  if (!best) throw AccountingError("select_candidate: no candidate has a finite CE");
  report.selected_m = best->m;
  for (auto& c : report.candidates) c.selected = c.m == best->m;
  return report.selected_m;
}

NestedSupernet::NestedSupernet(BlockwiseDenoiser& model, Optimizer& optimizer, CandidateSet candidates,
                               const BlockPriorityTable& table)
    : model_(model), optimizer_(optimizer), candidates_(std::move(candidates)), table_(table) {
  if (candidates_.values.empty()) throw ParameterError("supernet: empty candidate set");
  for (int m : candidates_.values)
    if (m < 1 || m > model_.num_blocks()) throw ParameterError("supernet: candidate outside [1, L]");
}

int NestedSupernet::epoch_steps(const SyntheticDataset& data, int batch_size) const {
  if (batch_size < 1) throw ParameterError("supernet: batch size must be >= 1");
  return static_cast<int>((data.train_count + static_cast<std::size_t>(batch_size) - 1) / static_cast<std::size_t>(batch_size));
}

StepRecord NestedSupernet::step(int s, const SyntheticDataset& data, const NoiseSchedule& sched, const HoldoutSet& holdout,
                                StepClock& clock, const SupernetOptions& options, double last_loss) {
  const int total = epoch_steps(data, options.batch_size);
  if (s < 1 || s > total) throw ParameterError("supernet: step outside the epoch");
  if (options.eval_every < 1) throw ParameterError("supernet: eval_every must be >= 1");

  const std::uint64_t key = derive_seed(options.seed, {kStreamShuffle, static_cast<std::uint64_t>(options.stage)});
  if (order_.empty() || order_key_ != key) {
    order_ = data.train_indices();
    Rng rng(key);
    for (std::size_t i = order_.size(); i > 1; --i) std::swap(order_[i - 1], order_[rng.below(i)]);
    order_key_ = key;
  }

  Rng rng(derive_seed(options.seed, {kStreamSupernet, static_cast<std::uint64_t>(options.stage),
                                     static_cast<std::uint64_t>(s)}));
  StepRecord rec;
  rec.step = s;
  rec.sampled_m = candidates_.values[rng.below(candidates_.values.size())];
  const FreezeMask mask = select_subnetwork(table_, rec.sampled_m);
  model_.apply_freeze_mask(mask);

  const std::size_t begin = static_cast<std::size_t>(s - 1) * static_cast<std::size_t>(options.batch_size);
  const std::size_t end = std::min(begin + static_cast<std::size_t>(options.batch_size), order_.size());
  const auto batch = make_training_batch(data, std::span(order_).subspan(begin, end - begin), sched,
                                         options.condition_mode, options.drop_probability, rng);
  clock.start_step();
  train_step(model_, optimizer_, batch, grads_);
  rec.wall_time = clock.finish_step(count_trainable_params(model_, mask));

  rec.evaluated = s % options.eval_every == 0 || s == total;
  rec.holdout_loss = rec.evaluated ? quantize_loss(holdout_eval(model_, holdout)) : last_loss;
  return rec;
}

SupernetTrace run_supernet_epoch(NestedSupernet& net, const SyntheticDataset& data, const NoiseSchedule& sched,
                                 const HoldoutSet& holdout, StepClock& clock, const SupernetOptions& options) {
  SupernetTrace trace;
  trace.initial_loss = quantize_loss(holdout_eval(net.model(), holdout));
  const int total = net.epoch_steps(data, options.batch_size);
  double last = trace.initial_loss;
  for (int s = 1; s <= total; ++s) {
    trace.records.push_back(net.step(s, data, sched, holdout, clock, options, last));
    last = trace.records.back().holdout_loss;
  }
  return trace;
}

}  // namespace entprog
