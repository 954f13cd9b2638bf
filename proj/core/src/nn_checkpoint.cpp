#include "vguard/nn/checkpoint.hpp"

#include <fstream>

#include <nlohmann/json.hpp>

namespace vguard::nn {

using nlohmann::json;

namespace {

json nest_values(const std::vector<float>& flat, const std::vector<size_t>& shape, size_t dim,
                 size_t& cursor) {
  json out = json::array();
  if (dim + 1 == shape.size()) {
    for (size_t i = 0; i < shape[dim]; ++i) out.push_back(flat[cursor++]);
    return out;
  }
  for (size_t i = 0; i < shape[dim]; ++i) out.push_back(nest_values(flat, shape, dim + 1, cursor));
  return out;
}

void flatten_values(const json& node, std::vector<float>& out) {
  if (node.is_array()) {
    for (const auto& child : node) flatten_values(child, out);
    return;
  }
  out.push_back(node.get<float>());
}

json tensor_to_json(const ParamTensor<float>& t) {
  json jt;
  jt["shape"] = t.shape;
  size_t cursor = 0;
  jt["values"] = nest_values(*t.values, t.shape, 0, cursor);
  if (cursor != t.values->size())
    throw Error("checkpoint: shape of " + t.name + " does not match its data");
  return jt;
}

json spec_to_json(const ModelSpec& s) {
  return json{{"input_hw", s.input_hw},
              {"conv1_filters", s.conv1_filters},
              {"conv1_kernel", s.conv1_kernel},
              {"conv2_filters", s.conv2_filters},
              {"conv2_kernel", s.conv2_kernel},
              {"conv3_filters", s.conv3_filters},
              {"conv3_kernel", s.conv3_kernel},
              {"dense1_units", s.dense1_units},
              {"dense2_units", s.dense2_units},
              {"num_classes", s.num_classes},
              {"dropout_conv", s.dropout_conv},
              {"dropout_dense", s.dropout_dense},
              {"block3_dropout", s.block3_dropout},
              {"l1", s.l1},
              {"l2", s.l2},
              {"bn_momentum", s.bn_momentum},
              {"bn_epsilon", s.bn_epsilon}};
}

ModelSpec spec_from_json(const json& j) {
  ModelSpec s;
  s.input_hw = j.at("input_hw").get<size_t>();
  s.conv1_filters = j.at("conv1_filters").get<size_t>();
  s.conv1_kernel = j.at("conv1_kernel").get<size_t>();
  s.conv2_filters = j.at("conv2_filters").get<size_t>();
  s.conv2_kernel = j.at("conv2_kernel").get<size_t>();
  s.conv3_filters = j.at("conv3_filters").get<size_t>();
  s.conv3_kernel = j.at("conv3_kernel").get<size_t>();
  s.dense1_units = j.at("dense1_units").get<size_t>();
  s.dense2_units = j.at("dense2_units").get<size_t>();
  s.num_classes = j.at("num_classes").get<size_t>();
  s.dropout_conv = j.at("dropout_conv").get<double>();
  s.dropout_dense = j.at("dropout_dense").get<double>();
  s.block3_dropout = j.at("block3_dropout").get<bool>();
  s.l1 = j.at("l1").get<double>();
  s.l2 = j.at("l2").get<double>();
  s.bn_momentum = j.at("bn_momentum").get<double>();
  s.bn_epsilon = j.at("bn_epsilon").get<double>();
  return s;
}

json fold_to_json(const FoldMetrics& m) {
  json jf;
  jf["fold"] = m.fold;
  jf["epochs_run"] = m.epochs_run;
  jf["best_val_loss"] = m.best_val_loss;
  jf["val_macro_f1"] = m.val_macro_f1;
  jf["val_accuracy"] = m.val_accuracy;
  jf["val_confusion"] = m.val_confusion;
  json hist = json::array();
  for (const auto& e : m.history)
    hist.push_back(json{{"train_loss", e.train_loss}, {"val_loss", e.val_loss}});
  jf["history"] = hist;
  return jf;
}

FoldMetrics fold_from_json(const json& jf) {
  FoldMetrics m;
  m.fold = jf.at("fold").get<int>();
  m.epochs_run = jf.at("epochs_run").get<int>();
  m.best_val_loss = jf.at("best_val_loss").get<double>();
  m.val_macro_f1 = jf.at("val_macro_f1").get<double>();
  m.val_accuracy = jf.at("val_accuracy").get<double>();
  const auto& conf = jf.at("val_confusion");
  for (size_t r = 0; r < kNumClasses; ++r)
    for (size_t c = 0; c < kNumClasses; ++c) m.val_confusion[r][c] = conf[r][c].get<size_t>();
  for (const auto& e : jf.at("history")) {
    EpochStats s;
    s.train_loss = e.at("train_loss").get<double>();
    s.val_loss = e.at("val_loss").get<double>();
    m.history.push_back(s);
  }
  return m;
}

}  // namespace

void save_checkpoint(Model<float>& model, const TrainResult& result, uint64_t seed,
                     const std::filesystem::path& path) {
  if (!model.ready()) throw Error("save_checkpoint: model is uninitialized");
  json j;
  j["format_version"] = 1;
  j["seed"] = seed;
  j["scalar"] = "float32";
  j["spec"] = spec_to_json(model.spec());
  json tensors = json::object();
  for (const auto& t : model.parameters()) tensors[t.name] = tensor_to_json(t);
  j["tensors"] = std::move(tensors);
  json buffers = json::object();
  for (const auto& t : model.buffers()) buffers[t.name] = tensor_to_json(t);
  j["buffers"] = std::move(buffers);
  json history;
  history["selected_fold"] = result.selected_fold;
  json folds = json::array();
  for (const auto& f : result.folds) folds.push_back(fold_to_json(f));
  history["folds"] = std::move(folds);
  j["history"] = std::move(history);

  std::ofstream out(path, std::ios::trunc);
  if (!out) throw Error("save_checkpoint: cannot write " + path.string());
  out << j.dump() << '\n';
}

LoadedCheckpoint load_checkpoint(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw MissingInputError("load_checkpoint: cannot open " + path.string());
  json j;
  try {
    in >> j;
  } catch (const json::exception& e) {
    throw Error("load_checkpoint: " + path.string() + ": " + e.what());
  }
  if (j.at("format_version").get<int>() != 1)
    throw Error("load_checkpoint: unsupported format version");

  LoadedCheckpoint loaded;
  loaded.seed = j.at("seed").get<uint64_t>();
  loaded.model = Model<float>(spec_from_json(j.at("spec")), /*init_seed=*/0);

  auto fill = [&](std::vector<ParamTensor<float>> tensors, const json& source) {
    for (auto& t : tensors) {
      const auto it = source.find(t.name);
      if (it == source.end()) throw Error("load_checkpoint: missing tensor " + t.name);
      std::vector<float> flat;
      flatten_values(it->at("values"), flat);
      if (flat.size() != t.values->size())
        throw Error("load_checkpoint: tensor " + t.name + " has wrong size");
      *t.values = std::move(flat);
    }
  };
  fill(loaded.model.parameters(), j.at("tensors"));
  fill(loaded.model.buffers(), j.at("buffers"));

  loaded.selected_fold = j.at("history").at("selected_fold").get<int>();
  for (const auto& jf : j.at("history").at("folds")) loaded.folds.push_back(fold_from_json(jf));
  return loaded;
}

void save_fold_metrics(const TrainResult& result, const std::filesystem::path& path) {
  json j;
  j["selected_fold"] = result.selected_fold;
  json folds = json::array();
  for (const auto& f : result.folds) folds.push_back(fold_to_json(f));
  j["folds"] = std::move(folds);
  std::ofstream out(path, std::ios::trunc);
  if (!out) throw Error("save_fold_metrics: cannot write " + path.string());
  out << j.dump(2) << '\n';
}

}  // namespace vguard::nn
