#pragma once

#include <filesystem>
#include <map>
#include <string>
#include <vector>

#include "s2v/checkpoint.hpp"
#include "s2v/config.hpp"
#include "s2v/dataset.hpp"
#include "s2v/metrics.hpp"
#include "s2v/trainer.hpp"

// End-to-end steps shared by the CLI and the acceptance suite.
namespace s2v::pipeline {

struct SplitDates {
  data::Date valid_start;
  data::Date test_start;
};

// Configured dates, or the unique dates at 70% / 85% when left empty.
SplitDates resolve_split(const RunConfig& cfg, const data::TabularDataset& ds);

enum class Partition { train, valid, test };
Partition parse_partition(const std::string& name);

struct Prepared {
  data::TabularDataset dataset;
  data::Encoder encoder;
  SplitDates split;
  std::size_t window = 0;
  std::vector<data::WindowedSample> train, valid, test;

  const std::vector<data::WindowedSample>& part(Partition p) const;
};

// Split, fit the encoder on the training partition, window every row. The
// histories of validation and test rows reach back into earlier partitions.
Prepared prepare(const RunConfig& cfg, data::TabularDataset ds);
Prepared prepare(const RunConfig& cfg);  // loads cfg.data
// Re-windows a dataset with a previously fitted encoder and split.
Prepared prepare_fitted(data::TabularDataset ds, const data::Encoder& encoder, SplitDates split, std::size_t window);

struct TrainResult {
  ckpt::Checkpoint checkpoint;
  train::ProtocolReport report;
};

// Builds cfg.model, runs the training protocol and packages the best
// parameters together with everything evaluation needs (encoder, window,
// split, series groups).
TrainResult train_model(const RunConfig& cfg, const Prepared& data, const train::Pretrained& pretrained = {},
                        const train::EpochSink& sink = {});

// Checkpoint metadata accessors.
data::Encoder checkpoint_encoder(const ckpt::Checkpoint& c);
SplitDates checkpoint_split(const ckpt::Checkpoint& c);
std::size_t checkpoint_window(const ckpt::Checkpoint& c);
std::map<std::string, std::string> checkpoint_groups(const ckpt::Checkpoint& c);

// Price-unit forecasts for the given samples.
metrics::ForecastSet forecast(const nn::ForecastModel<float>& model, const data::Encoder& encoder,
                              const std::vector<data::WindowedSample>& samples, std::size_t window);

}  // namespace s2v::pipeline
