#pragma once

#include <cstdint>
#include <functional>
#include <iosfwd>
#include <optional>
#include <set>
#include <string>
#include <vector>

#include "s2v/checkpoint.hpp"
#include "s2v/dataset.hpp"
#include "s2v/models.hpp"
#include "s2v/optim.hpp"

namespace s2v::train {

struct StageConfig {
  std::string name;
  std::set<std::string> frozen;
  LRSchedule schedule;
  std::size_t epochs = 1;
  std::size_t batch_size = 128;
  // Stop after `patience` evaluations without improvement. Every stage
  // restores its best validation checkpoint when it ends, stopped or not.
  bool early_stopping = false;
  std::size_t patience = 3;
  double min_delta = 1e-6;
  double clip_norm = 10.0;
  OptimizerKind optimizer = OptimizerKind::adam;
  std::uint64_t seed = 0;
};

struct EpochLog {
  std::size_t epoch = 0;  // 1-based, counted across stages
  std::string stage;
  double lr = 0.0;         // rate at the epoch's first step
  double train_mse = 0.0;  // running mean over the epoch's minibatches
  double valid_mse = 0.0;
  double wall_seconds = 0.0;
};

struct StageReport {
  std::string name;
  std::vector<EpochLog> epochs;
  double initial_valid = 0.0;
  double best_valid = 0.0;
  std::size_t best_epoch = 0;  // 1-based within the stage; 0 when no epoch improved
  bool stopped_early = false;
  std::uint64_t steps = 0;
};

using EpochSink = std::function<void(const EpochLog&)>;

// Scaled-target MSE in evaluation mode.
template <class T>
double evaluate_mse(const nn::ForecastModel<T>& model, const std::vector<data::WindowedSample>& samples,
                    std::size_t window, std::size_t batch_size = 512);

// Scaled predictions in sample order.
template <class T>
std::vector<double> predict(const nn::ForecastModel<T>& model, const std::vector<data::WindowedSample>& samples,
                            std::size_t window, std::size_t batch_size = 512);

// Seeded-shuffled minibatches; forward, MSE, backward, clip, optimizer step on
// the parameters outside the frozen groups; validation once per epoch.
// DataError on empty inputs. On a non-finite loss or gradient the last good
// parameters are restored and DivergenceError is thrown.
template <class T>
StageReport train_stage(nn::ForecastModel<T>& model, const StageConfig& cfg,
                        const std::vector<data::WindowedSample>& train, const std::vector<data::WindowedSample>& valid,
                        std::size_t window, Optimizer& optimizer, std::size_t epoch_offset = 0,
                        const EpochSink& sink = {});

struct ProtocolConfig {
  std::size_t batch_size = 128;
  double clip_norm = 10.0;
  std::size_t patience = 3;
  double min_delta = 1e-6;
  // TS-TCN / TS-LSTM
  double ts_lr = 1e-4;
  std::size_t ts_epochs = 10;
  // Stock2Vec
  double s2v_max_lr = 1e-3;
  std::size_t s2v_cycle_epochs = 3;
  std::size_t s2v_cycles = 2;
  // hybrid head stage, then end-to-end fine-tuning
  double head_max_lr = 3e-4;
  std::size_t head_cycle_epochs = 2;
  std::size_t head_cycles = 2;
  double finetune_lr = 1e-5;
  std::size_t finetune_epochs = 10;
  std::uint64_t seed = 0;
};

struct Pretrained {
  const ckpt::Checkpoint* stock2vec = nullptr;
  const ckpt::Checkpoint* temporal = nullptr;
};

struct ProtocolReport {
  std::vector<StageReport> stages;
  Optimizer optimizer;
  double best_valid = 0.0;
};

// Stage plans. TS models: Adam at ts_lr with early stopping. Stock2Vec:
// one-cycle. Hybrids: copy the pretrained trunk and temporal blocks, train
// head + temporal projection with both frozen, then fine-tune everything.
std::vector<StageConfig> stage_plan(ModelKind kind, const ProtocolConfig& cfg);

// ProtocolError for a hybrid without both pretrained checkpoints.
template <class T>
ProtocolReport run_protocol(nn::ForecastModel<T>& model, const ProtocolConfig& cfg,
                            const std::vector<data::WindowedSample>& train,
                            const std::vector<data::WindowedSample>& valid, std::size_t window,
                            const Pretrained& pretrained = {}, const EpochSink& sink = {});

// Array-name prefixes copied from pretrained checkpoints into a hybrid.
std::vector<std::string> trunk_transfer_prefixes();
std::vector<std::string> temporal_transfer_prefixes(ModelKind kind);

// `epoch,stage,lr,train_mse,valid_mse,wall_seconds`
void write_log_header(std::ostream& out);
void write_log_row(std::ostream& out, const EpochLog& e, bool wall_time = true);

}  // namespace s2v::train
