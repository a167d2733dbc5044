#include "mcevit/train.hpp"

#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>

#include "mcevit/adam.hpp"
#include "mcevit/errors.hpp"
#include "mcevit/threading.hpp"

namespace mcevit {

void TrainConfig::validate() const {
  if (batch_size < 1) throw ConfigError("train: batch_size must be >= 1");
  if (epochs < 1) throw ConfigError("train: epochs must be >= 1");
  if (lr <= 0.0) throw ConfigError("train: lr must be positive");
}

namespace {

Tensor onehot_rows(const std::vector<int>& labels, int classes) {
  std::vector<float> data(labels.size() * static_cast<std::size_t>(classes), 0.0f);
  for (std::size_t i = 0; i < labels.size(); ++i)
    data[i * classes + static_cast<std::size_t>(labels[i])] = 1.0f;
  return Tensor::from_vector({static_cast<std::int64_t>(labels.size()), classes}, std::move(data));
}

int row_argmax(const std::vector<float>& rows, std::size_t row, int classes) {
  int best = 0;
  for (int c = 1; c < classes; ++c)
    if (rows[row * classes + c] > rows[row * classes + best]) best = c;
  return best;
}

// Branch features for every image, extracted in parallel with recording off.
std::vector<std::vector<float>> extract_features(const FusionModel& model,
                                                 const std::vector<const LabeledImage*>& images) {
  std::vector<std::vector<float>> features(images.size());
  parallel_for(images.size(), [&](std::size_t i) {
    NoGrad guard;
    const PreprocessedImage pp = preprocess(images[i]->image, model.config);
    features[i] = fused_forward(model, pp.rgb, pp.enriched).concat_feature.values();
  });
  return features;
}

Tensor rows_from_features(const std::vector<std::vector<float>>& features,
                          const std::vector<std::size_t>& indices, std::int64_t width) {
  std::vector<float> data;
  data.reserve(indices.size() * static_cast<std::size_t>(width));
  for (const auto idx : indices) {
    data.insert(data.end(), features[idx].begin(), features[idx].end());
  }
  return Tensor::from_vector({static_cast<std::int64_t>(indices.size()), width}, std::move(data));
}

struct Snapshot {
  std::vector<std::vector<float>> values;
  static Snapshot take(const std::vector<Tensor>& params) {
    Snapshot s;
    for (const auto& p : params) s.values.push_back(p.values());
    return s;
  }
  void restore(std::vector<Tensor>& params) const {
    for (std::size_t i = 0; i < params.size(); ++i) params[i].mutable_values() = values[i];
  }
};

}  // namespace

std::pair<FusionModel, TrainLog> train(FusionModel model, const std::vector<LabeledImage>& items,
                                       const DatasetSplit& split, const TrainConfig& cfg) {
  cfg.validate();
  model.config.validate();
  if (split.train.empty() || split.validation.empty()) {
    throw ConfigError("train: split has an empty train or validation partition");
  }
  const auto train_items = select_by_id(items, split.train);
  const auto val_items = select_by_id(items, split.validation);
  const int classes = model.config.classes;
  const std::int64_t width = model.config.concat_width();
  const bool frozen = model.config.backbone_mode == BackboneMode::frozen;

  std::vector<Tensor> params = model.trainable_parameters();
  AdamState opt;
  opt.lr = cfg.lr;
  opt.beta1 = cfg.beta1;
  opt.beta2 = cfg.beta2;
  opt.eps = cfg.eps;
  opt.init(params);

  // Frozen backbones never change, so branch features are computed once.
  std::vector<std::vector<float>> train_feats, val_feats;
  std::vector<PreprocessedImage> train_pp, val_pp;
  if (frozen) {
    train_feats = extract_features(model, train_items);
    val_feats = extract_features(model, val_items);
  } else {
    train_pp.resize(train_items.size());
    val_pp.resize(val_items.size());
    parallel_for(train_items.size(),
                 [&](std::size_t i) { train_pp[i] = preprocess(train_items[i]->image, model.config); });
    parallel_for(val_items.size(),
                 [&](std::size_t i) { val_pp[i] = preprocess(val_items[i]->image, model.config); });
  }

  const auto batch_probs = [&](const std::vector<std::size_t>& idx,
                               const std::vector<PreprocessedImage>& pp) {
    std::vector<Tensor> rows;
    rows.reserve(idx.size());
    for (const auto i : idx) {
      auto out = fused_forward(model, pp[i].rgb, pp[i].enriched);
      rows.push_back(reshape(out.probabilities, {1, classes}));
    }
    return concat(rows, 0);
  };

  const auto evaluate_partition = [&](const std::vector<const LabeledImage*>& part,
                                      const std::vector<std::vector<float>>& feats,
                                      const std::vector<PreprocessedImage>& pp) {
    NoGrad guard;
    std::vector<int> labels(part.size());
    for (std::size_t i = 0; i < part.size(); ++i) labels[i] = part[i]->label;
    Tensor probs;
    if (frozen) {
      std::vector<std::size_t> all(part.size());
      for (std::size_t i = 0; i < all.size(); ++i) all[i] = i;
      probs = head_forward(model, rows_from_features(feats, all, width)).second;
    } else {
      std::vector<std::size_t> all(part.size());
      for (std::size_t i = 0; i < all.size(); ++i) all[i] = i;
      probs = batch_probs(all, pp);
    }
    const Tensor loss = crossentropy(probs, onehot_rows(labels, classes));
    std::size_t correct = 0;
    for (std::size_t i = 0; i < part.size(); ++i)
      if (row_argmax(probs.values(), i, classes) == labels[i]) ++correct;
    return std::make_pair(static_cast<double>(loss.item()),
                          static_cast<double>(correct) / static_cast<double>(part.size()));
  };

  TrainLog log;
  double best_val_acc = -1.0;
  Snapshot best_snapshot;
  std::vector<Tensor> all_params = model.all_parameters();

  std::vector<std::size_t> order(train_items.size());
  for (std::size_t i = 0; i < order.size(); ++i) order[i] = i;

  for (int epoch = 0; epoch < cfg.epochs; ++epoch) {
    Rng shuffle_rng(mix_seed(cfg.seed, 0x10000u + static_cast<std::uint64_t>(epoch)));
    shuffle_rng.shuffle(order);

    double loss_sum = 0.0;
    std::size_t batches = 0;
    std::size_t correct = 0;
    for (std::size_t start = 0; start < order.size(); start += static_cast<std::size_t>(cfg.batch_size)) {
      const std::size_t end = std::min(order.size(), start + static_cast<std::size_t>(cfg.batch_size));
      const std::vector<std::size_t> batch(order.begin() + static_cast<std::ptrdiff_t>(start),
                                           order.begin() + static_cast<std::ptrdiff_t>(end));
      std::vector<int> labels(batch.size());
      for (std::size_t i = 0; i < batch.size(); ++i) labels[i] = train_items[batch[i]]->label;

      Tensor probs = frozen ? head_forward(model, rows_from_features(train_feats, batch, width)).second
                            : batch_probs(batch, train_pp);
      const Tensor loss = crossentropy(probs, onehot_rows(labels, classes));
      const double loss_value = loss.item();
      if (!std::isfinite(loss_value)) {
        throw DivergenceError("loss is not finite at epoch " + std::to_string(epoch + 1) + " batch " +
                              std::to_string(batches + 1));
      }
      for (std::size_t i = 0; i < batch.size(); ++i)
        if (row_argmax(probs.values(), i, classes) == labels[i]) ++correct;

      for (auto& p : params) p.zero_grad();
      backward(loss);
      adam_step(params, opt);

      loss_sum += loss_value;
      ++batches;
    }

    EpochStats stats;
    stats.train_loss = loss_sum / static_cast<double>(batches);
    stats.train_accuracy = static_cast<double>(correct) / static_cast<double>(order.size());
    std::tie(stats.val_loss, stats.val_accuracy) = evaluate_partition(val_items, val_feats, val_pp);
    log.epochs.push_back(stats);

    if (stats.val_accuracy > best_val_acc) {
      best_val_acc = stats.val_accuracy;
      log.best_epoch = epoch;
      best_snapshot = Snapshot::take(all_params);
    }
    if (cfg.verbose) {
      std::printf("epoch %d/%d train_loss=%.4f train_acc=%.4f val_loss=%.4f val_acc=%.4f\n",
                  epoch + 1, cfg.epochs, stats.train_loss, stats.train_accuracy, stats.val_loss,
                  stats.val_accuracy);
      std::fflush(stdout);
    }
  }

  best_snapshot.restore(all_params);
  if (!cfg.checkpoint_dir.empty()) {
    std::filesystem::create_directories(cfg.checkpoint_dir);
    save_model(model, (std::filesystem::path(cfg.checkpoint_dir) / "best.mcew").string());
  }
  return {std::move(model), std::move(log)};
}

void write_train_log_csv(const TrainLog& log, const std::string& path) {
  std::ofstream out(path);
  if (!out) throw IoError("cannot write " + path);
  out << "epoch,train_loss,train_accuracy,val_loss,val_accuracy,best\n";
  char buf[160];
  for (std::size_t i = 0; i < log.epochs.size(); ++i) {
    const auto& e = log.epochs[i];
    std::snprintf(buf, sizeof(buf), "%zu,%.9g,%.9g,%.9g,%.9g,%d\n", i + 1, e.train_loss,
                  e.train_accuracy, e.val_loss, e.val_accuracy,
                  static_cast<int>(i) == log.best_epoch ? 1 : 0);
    out << buf;
  }
  if (!out) throw IoError("short write to " + path);
}

}  // namespace mcevit
