#pragma once

#include <fstream>
#include <string>
#include <vector>

#include <json.hpp>

#include "welwl/error.hpp"
#include "welwl/geometry.hpp"
#include "welwl/ppgn.hpp"
#include "welwl/tensor.hpp"
#include "welwl/welnet.hpp"

// JSON (de)serialization for parameter bundles and point clouds. Floats are
// written with shortest round-trip decimal encoding, so a save/load cycle
// reproduces every value bit-exactly.

namespace welwl {

using json = nlohmann::json;

inline json to_json(const Matrix& m) {
  return json{{"rows", m.rows()}, {"cols", m.cols()}, {"values", std::vector<double>(m.values().begin(), m.values().end())}};
}

inline Matrix matrix_from_json(const json& j) {
  return Matrix(j.at("rows").get<int>(), j.at("cols").get<int>(), j.at("values").get<std::vector<double>>());
}

inline json to_json(const Activation& a) {
  return json{{"kind", to_string(a.kind)}, {"alpha", a.alpha}};
}

inline Activation activation_from_json(const json& j) {
  return Activation{activation_kind_from_string(j.at("kind").get<std::string>()), j.at("alpha").get<double>()};
}

inline json to_json(const DenseLayer& l) {
  return json{{"weight", to_json(l.weight)}, {"bias", l.bias}, {"activation", to_json(l.activation)}};
}

inline DenseLayer dense_layer_from_json(const json& j) {
  return DenseLayer{matrix_from_json(j.at("weight")), j.at("bias").get<std::vector<double>>(),
                    activation_from_json(j.at("activation"))};
}

inline json to_json(const PpgnParams& p) {
  json layers = json::array();
  for (const auto& layer : p.layers)
    layers.push_back(json{{"phi1", to_json(layer.phi1)}, {"phi2", to_json(layer.phi2)}, {"phi3", to_json(layer.phi3)}});
  return json{{"type", "ppgn"},
              {"input_dim", p.input_dim},
              {"hidden_dim", p.hidden_dim},
              {"iterations", p.iterations},
              {"combination", to_string(p.combination)},
              {"activation", to_json(p.activation)},
              {"seed", p.seed},
              {"widths", p.widths},
              {"layers", layers},
              {"readout", to_json(p.readout)}};
}

inline PpgnParams ppgn_from_json(const json& j) {
  if (j.value("type", "") != "ppgn") throw IoError("ppgn_from_json: missing type tag");
  PpgnParams p;
  p.input_dim = j.at("input_dim").get<int>();
  p.hidden_dim = j.at("hidden_dim").get<int>();
  p.iterations = j.at("iterations").get<int>();
  p.combination = combination_from_string(j.at("combination").get<std::string>());
  p.activation = activation_from_json(j.at("activation"));
  p.seed = j.at("seed").get<std::uint64_t>();
  p.widths = j.at("widths").get<std::vector<int>>();
  for (const auto& layer : j.at("layers"))
    p.layers.push_back(PpgnLayerParams{dense_layer_from_json(layer.at("phi1")), dense_layer_from_json(layer.at("phi2")),
                                       dense_layer_from_json(layer.at("phi3"))});
  p.readout = dense_layer_from_json(j.at("readout"));
  return p;
}

inline json to_json(const Mlp& m) {
  json layers = json::array();
  for (const auto& layer : m.layers) layers.push_back(to_json(layer));
  return json{{"layers", layers}};
}

inline Mlp mlp_from_json(const json& j) {
  Mlp m;
  for (const auto& layer : j.at("layers")) m.layers.push_back(dense_layer_from_json(layer));
  return m;
}

inline json to_json(const WelConvParams& p) {
  return json{{"message", to_json(p.message)},
              {"coef_x_vel", to_json(p.coef_x_vel)},
              {"coef_x_rel", to_json(p.coef_x_rel)},
              {"coef_x_nbrvel", to_json(p.coef_x_nbrvel)},
              {"coef_v_vel", to_json(p.coef_v_vel)},
              {"coef_v_rel", to_json(p.coef_v_rel)},
              {"coef_v_nbrvel", to_json(p.coef_v_nbrvel)},
              {"hidden_update", to_json(p.hidden_update)}};
}

inline WelConvParams welconv_from_json(const json& j) {
  WelConvParams p;
  p.message = mlp_from_json(j.at("message"));
  p.coef_x_vel = mlp_from_json(j.at("coef_x_vel"));
  p.coef_x_rel = mlp_from_json(j.at("coef_x_rel"));
  p.coef_x_nbrvel = mlp_from_json(j.at("coef_x_nbrvel"));
  p.coef_v_vel = mlp_from_json(j.at("coef_v_vel"));
  p.coef_v_rel = mlp_from_json(j.at("coef_v_rel"));
  p.coef_v_nbrvel = mlp_from_json(j.at("coef_v_nbrvel"));
  p.hidden_update = mlp_from_json(j.at("hidden_update"));
  return p;
}

inline json to_json(const WelNetParams& p) {
  json convs = json::array();
  for (const auto& conv : p.convs) convs.push_back(to_json(conv));
  return json{{"type", "welnet"},
              {"shared_ppgn", to_json(p.shared_ppgn)},
              {"convs", convs},
              {"node_embed", to_json(p.node_embed)},
              {"recompute_features", p.recompute_features},
              {"hidden_dim", p.hidden_dim},
              {"message_dim", p.message_dim},
              {"edge_feature_dim", p.edge_feature_dim},
              {"node_feature_dim", p.node_feature_dim}};
}

inline WelNetParams welnet_from_json(const json& j) {
  if (j.value("type", "") != "welnet") throw IoError("welnet_from_json: missing type tag");
  WelNetParams p;
  p.shared_ppgn = ppgn_from_json(j.at("shared_ppgn"));
  for (const auto& conv : j.at("convs")) p.convs.push_back(welconv_from_json(conv));
  p.node_embed = dense_layer_from_json(j.at("node_embed"));
  p.recompute_features = j.at("recompute_features").get<bool>();
  p.hidden_dim = j.at("hidden_dim").get<int>();
  p.message_dim = j.at("message_dim").get<int>();
  p.edge_feature_dim = j.at("edge_feature_dim").get<int>();
  p.node_feature_dim = j.at("node_feature_dim").get<int>();
  return p;
}

/// Point-cloud file schema: {"n": int, "X": [[x,y,z],...], "V": optional}.
inline json to_json(const PosVel& xv, bool include_velocities = true) {
  json x = json::array();
  for (const auto& p : xv.x.points) x.push_back(std::vector<double>{p[0], p[1], p[2]});
  json out{{"n", xv.n()}, {"X", x}};
  if (include_velocities) {
    json v = json::array();
    for (const auto& p : xv.v.points) v.push_back(std::vector<double>{p[0], p[1], p[2]});
    out["V"] = v;
  }
  return out;
}

inline PosVel posvel_from_json(const json& j) {
  const int n = j.at("n").get<int>();
  auto parse_cloud = [n](const json& arr, const char* name) {
    if (static_cast<int>(arr.size()) != n)
      throw IoError(std::string("point cloud: ") + name + " has " + std::to_string(arr.size()) + " rows, n=" +
                    std::to_string(n));
    std::vector<Vec3> pts;
    for (const auto& row : arr) {
      if (row.size() != 3) throw IoError(std::string("point cloud: ") + name + " row is not a 3-vector");
      pts.push_back(Vec3{row[0].get<double>(), row[1].get<double>(), row[2].get<double>()});
    }
    return make_point_cloud(std::move(pts));
  };
  PointCloud x = parse_cloud(j.at("X"), "X");
  PointCloud v = j.contains("V") ? parse_cloud(j.at("V"), "V")
                                 : make_point_cloud(std::vector<Vec3>(static_cast<std::size_t>(n), Vec3{0, 0, 0}));
  return make_posvel(std::move(x), std::move(v));
}

inline json load_json_file(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot open '" + path + "'");
  try {
    return json::parse(in);
  } catch (const json::parse_error& e) {
    throw IoError("malformed JSON in '" + path + "': " + e.what());
  }
}

inline void save_json_file(const std::string& path, const json& j) {
  std::ofstream out(path);
  if (!out) throw IoError("cannot write '" + path + "'");
  out << j.dump(2) << "\n";
}

}  // namespace welwl
