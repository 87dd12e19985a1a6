#include "s2v/trainer.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <numeric>
#include <ostream>

#include "s2v/csv.hpp"
#include "s2v/errors.hpp"
#include "s2v/ops.hpp"
#include "s2v/rng.hpp"

namespace s2v::train {

namespace {

template <class T>
using Snapshot = std::vector<std::vector<T>>;

template <class T>
Snapshot<T> snapshot(const nn::ForecastModel<T>& model) {
  Snapshot<T> s;
  for (const auto& p : model.parameters()) s.emplace_back(p.tensor.data().begin(), p.tensor.data().end());
  return s;
}

template <class T>
void restore(const nn::ForecastModel<T>& model, const Snapshot<T>& s) {
  auto params = model.parameters();
  for (std::size_t i = 0; i < params.size(); ++i) {
    auto d = params[i].tensor.mutable_data();
    std::copy(s[i].begin(), s[i].end(), d.begin());
  }
}

template <class T>
void for_each_batch(const std::vector<data::WindowedSample>& samples, std::size_t batch_size,
                    const std::function<void(const std::vector<std::size_t>&)>& fn,
                    const std::vector<std::size_t>* order = nullptr) {
  std::vector<std::size_t> idx;
  for (std::size_t start = 0; start < samples.size(); start += batch_size) {
    const std::size_t end = std::min(samples.size(), start + batch_size);
    idx.clear();
    for (std::size_t i = start; i < end; ++i) idx.push_back(order ? (*order)[i] : i);
    fn(idx);
  }
}

}  // namespace

template <class T>
std::vector<double> predict(const nn::ForecastModel<T>& model, const std::vector<data::WindowedSample>& samples,
                            std::size_t window, std::size_t batch_size) {
  std::vector<double> out;
  out.reserve(samples.size());
  for_each_batch<T>(samples, batch_size, [&](const std::vector<std::size_t>& idx) {
    const auto batch = data::make_batch<T>(samples, idx, window);
    ad::Tape<T> tape;
    nn::Context<T> ctx{tape, false, nullptr};
    const auto pred = model.forward(ctx, batch);
    for (T v : pred.data()) out.push_back(static_cast<double>(v));
  });
  return out;
}

template <class T>
double evaluate_mse(const nn::ForecastModel<T>& model, const std::vector<data::WindowedSample>& samples,
                    std::size_t window, std::size_t batch_size) {
  if (samples.empty()) throw DataError("cannot evaluate on an empty sample set");
  const auto pred = predict(model, samples, window, batch_size);
  double se = 0.0;
  for (std::size_t i = 0; i < samples.size(); ++i) {
    const double e = pred[i] - samples[i].target;
    se += e * e;
  }
  return se / static_cast<double>(samples.size());
}

template <class T>
StageReport train_stage(nn::ForecastModel<T>& model, const StageConfig& cfg,
                        const std::vector<data::WindowedSample>& train, const std::vector<data::WindowedSample>& valid,
                        std::size_t window, Optimizer& optimizer, std::size_t epoch_offset, const EpochSink& sink) {
  if (train.empty()) throw DataError("stage '" + cfg.name + "': empty training set");
  if (valid.empty()) throw DataError("stage '" + cfg.name + "': empty validation set");
  if (cfg.batch_size == 0) throw ContractError("batch size must be >= 1");

  model.set_frozen(cfg.frozen);
  const auto trainable = model.trainable();
  const std::size_t steps_per_epoch = (train.size() + cfg.batch_size - 1) / cfg.batch_size;

  Rng shuffle_rng(sub_seed(cfg.seed, "shuffle"));
  Rng dropout_rng(sub_seed(cfg.seed, "dropout"));
  EarlyStopping stopper(cfg.patience, cfg.min_delta);

  StageReport rep;
  rep.name = cfg.name;
  rep.initial_valid = evaluate_mse(model, valid, window);
  rep.best_valid = rep.initial_valid;
  stopper.update(rep.initial_valid);
  Snapshot<T> best = snapshot(model);

  std::vector<std::size_t> order(train.size());
  std::uint64_t step = 0;
  for (std::size_t epoch = 1; epoch <= cfg.epochs; ++epoch) {
    const auto t0 = std::chrono::steady_clock::now();
    std::iota(order.begin(), order.end(), 0);
    std::shuffle(order.begin(), order.end(), shuffle_rng);
    EpochLog log;
    log.epoch = epoch_offset + epoch;
    log.stage = cfg.name;
    log.lr = cfg.schedule.at(step, steps_per_epoch);
    double loss_sum = 0.0;
    for_each_batch<T>(train, cfg.batch_size, [&](const std::vector<std::size_t>& idx) {
      const auto batch = data::make_batch<T>(train, idx, window);
      for (const auto& p : trainable) p.tensor.clear_grad();
      ad::Tape<T> tape;
      nn::Context<T> ctx{tape, true, &dropout_rng};
      const auto pred = model.forward(ctx, batch);
      const auto loss = ad::mse_loss(tape, pred, batch.target);
      const double lv = static_cast<double>(loss.item());
      try {
        if (!std::isfinite(lv)) throw NumericError("non-finite training loss at step " + std::to_string(step + 1));
        if (!trainable.empty()) {
          ad::backward(loss, tape);
          clip_grad_norm<T>(trainable, cfg.clip_norm);
          optimizer.step<T>(trainable, cfg.schedule.at(step, steps_per_epoch));
        }
      } catch (const NumericError& e) {
        restore(model, best);
        throw DivergenceError("stage '" + cfg.name + "' diverged: " + e.what() +
                              "; restored the best parameters so far");
      }
      loss_sum += lv * static_cast<double>(idx.size());
      ++step;
    }, &order);
    log.train_mse = loss_sum / static_cast<double>(train.size());
    log.valid_mse = evaluate_mse(model, valid, window);
    if (!std::isfinite(log.valid_mse)) {
      restore(model, best);
      throw DivergenceError("stage '" + cfg.name + "' diverged: non-finite validation loss");
    }
    log.wall_seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
    rep.epochs.push_back(log);
    if (sink) sink(log);
    const auto decision = stopper.update(log.valid_mse);
    if (stopper.last_improved()) {
      best = snapshot(model);
      rep.best_valid = log.valid_mse;
      rep.best_epoch = epoch;
    }
    if (cfg.early_stopping && decision == EarlyStopping::Decision::stop) {
      rep.stopped_early = true;
      break;
    }
  }
  restore(model, best);
  rep.steps = step;
  for (const auto& p : model.parameters()) p.tensor.clear_grad();
  return rep;
}

std::vector<std::string> trunk_transfer_prefixes() { return {"stock2vec.embed.", "stock2vec.fc"}; }

std::vector<std::string> temporal_transfer_prefixes(ModelKind kind) {
  return {has_tcn(kind) ? "tcn.block" : "lstm.layer"};
}

std::vector<StageConfig> stage_plan(ModelKind kind, const ProtocolConfig& cfg) {
  StageConfig base;
  base.batch_size = cfg.batch_size;
  base.clip_norm = cfg.clip_norm;
  base.patience = cfg.patience;
  base.min_delta = cfg.min_delta;
  std::vector<StageConfig> plan;
  if (kind == ModelKind::ts_tcn || kind == ModelKind::ts_lstm) {
    StageConfig s = base;
    s.name = "temporal";
    s.schedule = LRSchedule::constant(cfg.ts_lr);
    s.epochs = cfg.ts_epochs;
    s.early_stopping = true;
    plan.push_back(s);
  } else if (kind == ModelKind::stock2vec) {
    StageConfig s = base;
    s.name = "stock2vec";
    s.schedule = LRSchedule::one_cycle(cfg.s2v_max_lr, cfg.s2v_cycle_epochs);
    s.epochs = cfg.s2v_cycle_epochs * cfg.s2v_cycles;
    plan.push_back(s);
  } else {
    StageConfig head = base;
    head.name = "head";
    head.frozen = {nn::kTrunk, nn::kTemporal};
    head.schedule = LRSchedule::one_cycle(cfg.head_max_lr, cfg.head_cycle_epochs);
    head.epochs = cfg.head_cycle_epochs * cfg.head_cycles;
    plan.push_back(head);
    StageConfig fine = base;
    fine.name = "finetune";
    fine.schedule = LRSchedule::constant(cfg.finetune_lr);
    fine.epochs = cfg.finetune_epochs;
    fine.early_stopping = true;
    plan.push_back(fine);
  }
  for (std::size_t i = 0; i < plan.size(); ++i) plan[i].seed = sub_seed(cfg.seed, "stage", i);
  return plan;
}

template <class T>
ProtocolReport run_protocol(nn::ForecastModel<T>& model, const ProtocolConfig& cfg,
                            const std::vector<data::WindowedSample>& train,
                            const std::vector<data::WindowedSample>& valid, std::size_t window,
                            const Pretrained& pretrained, const EpochSink& sink) {
  const ModelKind kind = model.spec().kind;
  if (is_hybrid(kind)) {
    if (!pretrained.stock2vec || !pretrained.temporal) {
      throw ProtocolError(to_string(kind) + " needs pretrained stock2vec and " +
                          (has_tcn(kind) ? "ts-tcn" : "ts-lstm") + " checkpoints");
    }
    ckpt::transfer(model, *pretrained.stock2vec, trunk_transfer_prefixes());
    ckpt::transfer(model, *pretrained.temporal, temporal_transfer_prefixes(kind));
  }
  ProtocolReport rep;
  std::size_t epochs = 0;
  for (const auto& stage : stage_plan(kind, cfg)) {
    Optimizer opt(stage.optimizer);
    rep.stages.push_back(train_stage(model, stage, train, valid, window, opt, epochs, sink));
    epochs += rep.stages.back().epochs.size();
    rep.optimizer = std::move(opt);
  }
  model.set_frozen({});
  rep.best_valid = rep.stages.back().best_valid;
  return rep;
}

void write_log_header(std::ostream& out) {
  csv::write_row(out, {"epoch", "stage", "lr", "train_mse", "valid_mse", "wall_seconds"});
}

void write_log_row(std::ostream& out, const EpochLog& e, bool wall_time) {
  csv::write_row(out, {std::to_string(e.epoch), e.stage, csv::format_double(e.lr), csv::format_double(e.train_mse),
                       csv::format_double(e.valid_mse), wall_time ? csv::format_double(e.wall_seconds, 6) : "0"});
}

#define S2V_TRAIN_INSTANTIATE(T)                                                                                 \
  template double evaluate_mse<T>(const nn::ForecastModel<T>&, const std::vector<data::WindowedSample>&,          \
                                  std::size_t, std::size_t);                                                     \
  template std::vector<double> predict<T>(const nn::ForecastModel<T>&, const std::vector<data::WindowedSample>&,  \
                                          std::size_t, std::size_t);                                             \
  template StageReport train_stage<T>(nn::ForecastModel<T>&, const StageConfig&,                                  \
                                      const std::vector<data::WindowedSample>&,                                  \
                                      const std::vector<data::WindowedSample>&, std::size_t, Optimizer&,         \
                                      std::size_t, const EpochSink&);                                            \
  template ProtocolReport run_protocol<T>(nn::ForecastModel<T>&, const ProtocolConfig&,                          \
                                          const std::vector<data::WindowedSample>&,                              \
                                          const std::vector<data::WindowedSample>&, std::size_t,                 \
                                          const Pretrained&, const EpochSink&);

S2V_TRAIN_INSTANTIATE(float)
S2V_TRAIN_INSTANTIATE(double)

}  // namespace s2v::train
