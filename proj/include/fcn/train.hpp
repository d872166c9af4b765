#pragma once

#include <cstdint>
#include <iosfwd>
#include <string>
#include <utility>
#include <vector>

#include "fcn/io.hpp"
#include "fcn/metrics.hpp"
#include "fcn/net.hpp"

namespace fcn {

// In-memory dataset: images[i] is (1, c, h, w), labels[i] matches its h x w.
struct Dataset {
  std::vector<std::string> names;
  std::vector<Tensor> images;
  std::vector<LabelMap> labels;

  size_t size() const { return images.size(); }
};

// dir must contain images/NAME.fcnt and labels/NAME.pgm with matching stems.
Dataset load_dataset(const std::string& dir);

struct TrainConfig {
  uint64_t seed = 1;
  double lr = 0.05;
  double momentum = 0.9;
  double weight_decay = 5e-4;
  int batch_size = 4;
  int epochs = 5;
  double sample_p = 1.0;          // per-pixel loss sampling probability
  double lr_drop_factor = 1.0;    // divides lr, e.g. 100 for staged fine-tuning
  std::string init_checkpoint;    // load over fresh init when set
  std::vector<double> class_weights;                  // empty: unweighted
  std::vector<std::pair<std::string, double>> heads;  // empty: every output, weight 1
};

// key = value lines, # comments. Unknown keys are errors; later lines win.
TrainConfig parse_train_config(const std::string& text);
TrainConfig load_train_config(const std::string& path);
// One key per line in a fixed order; parses back to an equal config.
std::string serialize_train_config(const TrainConfig& c);

// Minibatch SGD per the config. Parameters are freshly initialized from
// cfg.seed, then init_checkpoint (if any) is loaded over them with missing
// entries allowed, so surgery-added layers keep their zero init. When
// sample_p < 1 each batch draws ceil(batch_size / sample_p) images and every
// head shares the same per-image pixel masks; at sample_p = 1 no mask RNG is
// touched at all. Writes one CSV row per iteration (loss only) and one per
// epoch (mean train loss plus metrics on val_set, or on train_set when
// val_set is null) to csv when given. Returns the final parameters.
template <typename T>
Checkpoint train(Net<T>& net, const Dataset& train_set, const Dataset* val_set,
                 const TrainConfig& cfg, std::ostream* csv);

// Mean unmasked loss over every pixel of the set (single sum over images).
template <typename T>
double dataset_loss(Net<T>& net, const Dataset& ds);

// Confusion-matrix metrics of argmax predictions over the set. Multi-output
// nets are scored on their first output, matching NetSpec::class_count.
template <typename T>
MetricSet evaluate(Net<T>& net, const Dataset& ds);

}  // namespace fcn
