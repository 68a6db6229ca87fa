#include "pdet/train/train.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>

#include "pdet/ad/ops.hpp"
#include "pdet/core/error.hpp"
#include "pdet/core/parallel.hpp"
#include "pdet/core/rng.hpp"
#include "pdet/io/windows.hpp"

namespace pdet {

using ad::Tensor;

WindowSet::WindowSet(std::vector<const Trajectory*> trajectories, std::size_t k,
                     const NormStats& stats)
    : trajs_(std::move(trajectories)), k_(k), stats_(stats) {
  if (k == 0) throw ConfigError("context length must be positive");
  for (std::size_t i = 0; i < trajs_.size(); ++i) {
    const Trajectory& t = *trajs_[i];
    if (t.n_frames <= k) {
      throw DataError("trajectory with " + std::to_string(t.n_frames) +
                      " frames is too short for context length " + std::to_string(k));
    }
    if (i > 0 && (t.spatial != trajs_[0]->spatial || t.n_channels != trajs_[0]->n_channels ||
                  t.params.values.size() != trajs_[0]->params.values.size())) {
      throw DataError("window set mixes trajectories of different layouts");
    }
    if (t.n_channels != stats.mean.size()) {
      throw DataError("trajectory channels do not match normalization statistics");
    }
    norm_params_.push_back(stats.normalize_params(t.params.values));
    for (std::size_t f = k; f < t.n_frames; ++f) {
      refs_.push_back({static_cast<std::uint32_t>(i), static_cast<std::uint32_t>(f)});
    }
  }
  if (!trajs_.empty()) {
    const Trajectory& t = *trajs_[0];
    context_shape_ = {k, context_channels(t.n_channels, t.params.values.size())};
    target_shape_ = {t.n_channels};
    for (auto s : t.spatial) {
      context_shape_.push_back(s);
      target_shape_.push_back(s);
    }
  }
}

void WindowSet::context(std::size_t i, std::span<double> out) const {
  const Ref r = refs_.at(i);
  const Trajectory& t = *trajs_[r.traj];
  const std::size_t fs = t.frame_size();
  fill_context({t.frames.data() + (r.t - k_) * fs, k_ * fs}, k_, t.n_channels, t.cells(),
               norm_params_[r.traj], r.t - k_, 1.0 / static_cast<double>(t.n_frames - 1),
               stats_, out);
}

void WindowSet::target(std::size_t i, std::span<double> out) const {
  const Ref r = refs_.at(i);
  const Trajectory& t = *trajs_[r.traj];
  const auto f = t.frame(r.t);
  std::copy(f.begin(), f.end(), out.begin());
  stats_.normalize_frame(out, t.cells());
}

Tensor WindowSet::context_tensor(std::size_t i) const {
  std::vector<double> buf(ad::numel(context_shape_));
  context(i, buf);
  return Tensor::from(context_shape_, std::move(buf));
}

Tensor WindowSet::target_tensor(std::size_t i) const {
  std::vector<double> buf(ad::numel(target_shape_));
  target(i, buf);
  return Tensor::from(target_shape_, std::move(buf));
}

Tensor mse_loss(const Tensor& pred, const Tensor& target) {
  if (pred.shape() != target.shape()) {
    throw ShapeError("mse_loss: prediction " + ad::to_string(pred.shape()) + " vs target " +
                     ad::to_string(target.shape()));
  }
  Tensor d = ad::sub(pred, target);
  return ad::mean(ad::mul(d, d));
}

void OptimState::reset(const std::vector<NamedTensor>& weights) {
  m.clear();
  v.clear();
  for (const auto& w : weights) {
    m.emplace_back(w.tensor.numel(), 0.0);
    v.emplace_back(w.tensor.numel(), 0.0);
  }
  step = 0;
}

void adam_step(std::vector<NamedTensor>& weights, const std::vector<std::vector<double>>& grads,
               OptimState& opt) {
  if (opt.m.size() != weights.size()) opt.reset(weights);
  for (std::size_t i = 0; i < weights.size(); ++i) {
    for (double g : grads[i]) {
      if (!std::isfinite(g)) {
        throw DivergenceError("non-finite gradient in buffer " + weights[i].name);
      }
    }
  }
  ++opt.step;
  const double bc1 = 1.0 - std::pow(opt.beta1, static_cast<double>(opt.step));
  const double bc2 = 1.0 - std::pow(opt.beta2, static_cast<double>(opt.step));
  for (std::size_t i = 0; i < weights.size(); ++i) {
    auto w = weights[i].tensor.mutable_data();
    auto& m = opt.m[i];
    auto& v = opt.v[i];
    const auto& g = grads[i];
    for (std::size_t j = 0; j < w.size(); ++j) {
      m[j] = opt.beta1 * m[j] + (1.0 - opt.beta1) * g[j];
      v[j] = opt.beta2 * v[j] + (1.0 - opt.beta2) * g[j] * g[j];
      const double mhat = m[j] / bc1, vhat = v[j] / bc2;
      if (opt.weight_decay > 0.0) w[j] -= opt.lr * opt.weight_decay * w[j];
      w[j] -= opt.lr * mhat / (std::sqrt(vhat) + opt.eps);
    }
  }
}

double clip_global_norm(std::vector<std::vector<double>>& grads, double max_norm) {
  double sq = 0.0;
  for (const auto& g : grads) {
    for (double x : g) sq += x * x;
  }
  const double norm = std::sqrt(sq);
  if (max_norm > 0.0 && norm > max_norm) {
    const double s = max_norm / norm;
    for (auto& g : grads) {
      for (double& x : g) x *= s;
    }
  }
  return norm;
}

PlateauScheduler::PlateauScheduler(double lr, double factor, std::size_t patience)
    : lr_(lr), factor_(factor), patience_(patience), best_(INFINITY) {
  if (patience == 0) throw ConfigError("plateau patience must be >= 1");
}

bool PlateauScheduler::observe(double value) {
  if (value < best_) {
    best_ = value;
    bad_ = 0;
    return true;
  }
  if (++bad_ >= patience_) {
    lr_ *= factor_;
    bad_ = 0;
    ++reductions_;
  }
  return false;
}

void TrainPlan::validate() const {
  if (batch_size == 0) throw ConfigError("batch size must be positive");
  if (!(lr > 0.0)) throw ConfigError("learning rate must be positive");
  if (plateau_patience == 0) throw ConfigError("plateau patience must be >= 1");
  if (!(plateau_factor > 0.0 && plateau_factor <= 1.0)) {
    throw ConfigError("plateau factor must lie in (0, 1]");
  }
  if (!(input_noise >= 0.0 && std::isfinite(input_noise))) {
    throw ConfigError("input noise must be a finite value >= 0");
  }
}

nlohmann::json TrainPlan::to_json() const {
  return {{"max_epochs", max_epochs},
          {"batch_size", batch_size},
          {"lr", lr},
          {"plateau_factor", plateau_factor},
          {"plateau_patience", plateau_patience},
          {"early_stop_patience", early_stop_patience},
          {"max_steps", max_steps},
          {"clip_norm", clip_norm},
          {"weight_decay", weight_decay},
          {"input_noise", input_noise},
          {"seed", seed},
          {"restore_best", restore_best}};
}

TrainPlan TrainPlan::from_json(const nlohmann::json& j) {
  TrainPlan p;
  p.max_epochs = j.value("max_epochs", p.max_epochs);
  p.batch_size = j.value("batch_size", p.batch_size);
  p.lr = j.value("lr", p.lr);
  p.plateau_factor = j.value("plateau_factor", p.plateau_factor);
  p.plateau_patience = j.value("plateau_patience", p.plateau_patience);
  p.early_stop_patience = j.value("early_stop_patience", p.early_stop_patience);
  p.max_steps = j.value("max_steps", p.max_steps);
  p.clip_norm = j.value("clip_norm", p.clip_norm);
  p.weight_decay = j.value("weight_decay", p.weight_decay);
  p.input_noise = j.value("input_noise", p.input_noise);
  p.seed = j.value("seed", p.seed);
  p.restore_best = j.value("restore_best", p.restore_best);
  return p;
}

std::string format_train_log(const std::vector<EpochRecord>& log) {
  std::string out = "epoch,train_mse,val_mse,lr\n";
  char buf[128];
  for (const auto& r : log) {
    std::snprintf(buf, sizeof buf, "%zu,%.17g,%.17g,%.17g\n", r.epoch, r.train_mse, r.val_mse,
                  r.lr);
    out += buf;
  }
  return out;
}

void write_train_log(const std::filesystem::path& path, const std::vector<EpochRecord>& log) {
  std::ofstream out(path, std::ios::trunc);
  if (!out) throw DataError("cannot write training log " + path.string());
  out << format_train_log(log);
}

double evaluate_windows(const Model& model, const WindowSet& windows, std::size_t threads) {
  if (windows.size() == 0) return NAN;
  std::vector<double> per(windows.size());
  parallel_for(windows.size(), threads, [&](std::size_t i, std::size_t) {
    ad::NoGradGuard ng;
    per[i] = mse_loss(model.forward(windows.context_tensor(i)), windows.target_tensor(i)).item();
  });
  double s = 0.0;
  for (double v : per) s += v;
  return s / static_cast<double>(per.size());
}

void check_compatible(const Model& model, const NormStats& stats, std::size_t n_channels,
                      std::size_t n_params, const std::vector<std::size_t>& spatial) {
  if (model.out_channels() != n_channels || stats.mean.size() != n_channels) {
    throw DataError("model predicts " + std::to_string(model.out_channels()) +
                    " channels, dataset has " + std::to_string(n_channels));
  }
  if (model.in_channels() != context_channels(n_channels, n_params) ||
      stats.param_min.size() != n_params) {
    throw DataError("model expects " + std::to_string(model.in_channels()) +
                    " context channels, dataset provides " +
                    std::to_string(context_channels(n_channels, n_params)));
  }
  if (model.spatial() != spatial) throw DataError("model grid does not match dataset grid");
}

namespace {

struct Trainer {
  Model& model;
  const WindowSet& train_set;
  const TrainPlan& plan;
  std::size_t workers;
  std::vector<std::unique_ptr<Model>> clones;
  std::vector<std::vector<double>> grads;

  Trainer(Model& m, const WindowSet& ts, const TrainPlan& p)
      : model(m), train_set(ts), plan(p), workers(resolve_threads(p.threads)) {
    workers = std::max<std::size_t>(1, std::min(workers, plan.batch_size));
    for (std::size_t w = 1; w < workers; ++w) clones.push_back(model.clone());
    for (const auto& w : model.weights()) grads.emplace_back(w.tensor.numel(), 0.0);
  }

  Model& replica(std::size_t w) { return w == 0 ? model : *clones[w - 1]; }

  // Forward/backward over samples order[begin, end). Samples are split into
  // contiguous chunks per worker and the chunk gradients are summed in worker
  // order, so the result depends only on the thread count.
  // Perturbs the state channels of a context in place. The stream depends only
  // on the seed and the sample's position in the run.
  void add_noise(Tensor& ctx, std::uint64_t sample) const {
    const std::size_t k = model.context_length();
    const std::size_t ch = model.in_channels();
    const std::size_t state = model.out_channels();
    auto d = ctx.mutable_data();
    const std::size_t cells = d.size() / (k * ch);
    Rng rng(derive_seed(plan.seed, "noise", sample));
    for (std::size_t f = 0; f < k; ++f) {
      double* p = d.data() + f * ch * cells;
      for (std::size_t i = 0; i < state * cells; ++i) p[i] += plan.input_noise * rng.normal();
    }
  }

  double batch(const std::vector<std::size_t>& order, std::size_t begin, std::size_t end,
               std::uint64_t first_sample) {
    const std::size_t n = end - begin;
    const std::size_t nw = std::min(workers, n);
    std::vector<double> losses(n, 0.0);
    for (std::size_t w = 1; w < nw; ++w) clones[w - 1]->copy_weights_from(model);
    model.zero_grad();
    for (auto& c : clones) c->zero_grad();
    const double inv_n = 1.0 / static_cast<double>(n);
    parallel_for(nw, nw, [&](std::size_t w, std::size_t) {
      Model& m = replica(w);
      const std::size_t lo = w * n / nw, hi = (w + 1) * n / nw;
      for (std::size_t s = lo; s < hi; ++s) {
        ad::TapeScope scope;
        const std::size_t idx = order[begin + s];
        Tensor ctx = train_set.context_tensor(idx);
        if (plan.input_noise > 0.0) add_noise(ctx, first_sample + s);
        Tensor loss = mse_loss(m.forward(ctx), train_set.target_tensor(idx));
        losses[s] = loss.item();
        ad::backward(ad::scale(loss, inv_n));
      }
    });
    for (std::size_t i = 0; i < grads.size(); ++i) std::fill(grads[i].begin(), grads[i].end(), 0.0);
    for (std::size_t w = 0; w < nw; ++w) {
      auto& ws = replica(w).weights();
      for (std::size_t i = 0; i < ws.size(); ++i) {
        if (!ws[i].tensor.has_grad()) continue;
        const auto g = ws[i].tensor.grad();
        for (std::size_t j = 0; j < g.size(); ++j) grads[i][j] += g[j];
      }
    }
    double total = 0.0;
    for (double l : losses) total += l;
    return total * inv_n;
  }
};

std::vector<std::vector<double>> snapshot(const Model& m) {
  std::vector<std::vector<double>> s;
  for (const auto& w : m.weights()) s.emplace_back(w.tensor.data().begin(), w.tensor.data().end());
  return s;
}

void restore(Model& m, const std::vector<std::vector<double>>& s) {
  auto& ws = m.weights();
  for (std::size_t i = 0; i < ws.size(); ++i) {
    std::copy(s[i].begin(), s[i].end(), ws[i].tensor.mutable_data().begin());
  }
}

TrainResult run(Model& model, const WindowSet& train_set, const WindowSet& val_set,
                const TrainPlan& plan, bool early_stop) {
  plan.validate();
  if (train_set.size() == 0) throw DataError("training split has no windows");
  if (train_set.k() != model.context_length()) {
    throw DataError("window context length " + std::to_string(train_set.k()) +
                    " does not match model context " + std::to_string(model.context_length()));
  }
  ad::Shape expect{model.context_length(), model.in_channels()};
  for (auto s : model.spatial()) expect.push_back(s);
  if (train_set.context_shape() != expect) {
    throw DataError("training windows " + ad::to_string(train_set.context_shape()) +
                    " do not fit the model input " + ad::to_string(expect));
  }

  Trainer tr(model, train_set, plan);
  OptimState opt;
  opt.lr = plan.lr;
  opt.weight_decay = plan.weight_decay;
  opt.reset(model.weights());
  PlateauScheduler sched(plan.lr, plan.plateau_factor, plan.plateau_patience);
  TrainResult result;
  result.best_val = INFINITY;
  std::vector<std::vector<double>> best = snapshot(model);

  std::vector<std::size_t> order(train_set.size());
  std::size_t since_best = 0;
  std::uint64_t samples_seen = 0;
  for (std::size_t epoch = 1; epoch <= plan.max_epochs; ++epoch) {
    for (std::size_t i = 0; i < order.size(); ++i) order[i] = i;
    Rng rng(derive_seed(plan.seed, "shuffle", epoch));
    rng.shuffle(order.begin(), order.end());

    const double epoch_lr = sched.lr();
    opt.lr = epoch_lr;
    double loss_sum = 0.0;
    std::size_t loss_n = 0;
    bool capped = false;
    for (std::size_t b = 0; b < order.size(); b += plan.batch_size) {
      const std::size_t e = std::min(order.size(), b + plan.batch_size);
      const double loss = tr.batch(order, b, e, samples_seen);
      samples_seen += e - b;
      if (!std::isfinite(loss)) {
        throw DivergenceError("non-finite training loss at epoch " + std::to_string(epoch) +
                              ", step " + std::to_string(result.steps + 1));
      }
      loss_sum += loss * static_cast<double>(e - b);
      loss_n += e - b;
      if (plan.clip_norm > 0.0) clip_global_norm(tr.grads, plan.clip_norm);
      adam_step(model.weights(), tr.grads, opt);
      ++result.steps;
      if (plan.max_steps > 0 && result.steps >= plan.max_steps) {
        capped = true;
        break;
      }
    }
    const double train_mse = loss_sum / static_cast<double>(loss_n);
    const double val_mse =
        val_set.size() > 0 ? evaluate_windows(model, val_set, plan.threads) : train_mse;
    if (!std::isfinite(val_mse)) {
      throw DivergenceError("non-finite validation loss at epoch " + std::to_string(epoch));
    }
    result.log.push_back({epoch, train_mse, val_mse, epoch_lr});
    if (sched.observe(val_mse)) {
      result.best_val = val_mse;
      result.best_epoch = epoch;
      since_best = 0;
      if (plan.restore_best) best = snapshot(model);
    } else {
      ++since_best;
    }
    if (capped) break;
    if (early_stop && plan.early_stop_patience > 0 && since_best >= plan.early_stop_patience) {
      break;
    }
  }
  model.zero_grad();
  if (plan.restore_best && early_stop && !result.log.empty()) restore(model, best);
  return result;
}

}  // namespace

TrainResult train(Model& model, const WindowSet& train_set, const WindowSet& val_set,
                  const TrainPlan& plan) {
  return run(model, train_set, val_set, plan, true);
}

TrainResult finetune(Model& model, const WindowSet& train_set, const WindowSet& val_set,
                     TrainPlan plan) {
  if (plan.max_epochs == 0) return {};
  plan.restore_best = false;
  return run(model, train_set, val_set, plan, false);
}

}  // namespace pdet
