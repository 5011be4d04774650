#pragma once

#include <fstream>
#include <stdexcept>
#include <string>

#include <json.hpp>

#include "congan/training.hpp"

namespace congan {

inline constexpr int kModelFormatVersion = 1;

inline nlohmann::json to_json(const LayerWeights& l) {
    return {{"fan_in", l.fan_in}, {"fan_out", l.fan_out}, {"w", l.w}};
}

inline LayerWeights layer_from_json(const nlohmann::json& j) {
    LayerWeights l;
    l.fan_in = j.at("fan_in").get<int>();
    l.fan_out = j.at("fan_out").get<int>();
    l.w = j.at("w").get<std::vector<double>>();
    if (l.w.size() != static_cast<std::size_t>(l.fan_out * (l.fan_in + 1)))
        throw std::runtime_error("model_io: layer weight buffer size mismatch");
    return l;
}

inline nlohmann::json to_json(const GeneratorParams& p) {
    nlohmann::json jb = nlohmann::json::array(), jt = nlohmann::json::array();
    for (const auto& l : p.beta) jb.push_back(to_json(l));
    for (const auto& l : p.theta) jt.push_back(to_json(l));
    return {{"hidden", p.hidden}, {"beta", jb}, {"theta", jt}};
}

inline GeneratorParams params_from_json(const nlohmann::json& j) {
    GeneratorParams p;
    p.hidden = j.at("hidden").get<std::vector<int>>();
    for (const auto& l : j.at("beta")) p.beta.push_back(layer_from_json(l));
    for (const auto& l : j.at("theta")) p.theta.push_back(layer_from_json(l));
    return p;
}

inline nlohmann::json to_json(const Bandwidths& s) {
    return {{"x", s.x}, {"y", s.y}, {"z", s.z}};
}

inline Bandwidths bandwidths_from_json(const nlohmann::json& j) {
    Bandwidths s;
    s.x = j.at("x").get<double>();
    s.y = j.at("y").get<double>();
    s.z = j.at("z").get<double>();
    return s;
}

inline nlohmann::json to_json(const AffineMap& m) {
    return {{"shift", m.shift}, {"scale", m.scale}};
}

inline AffineMap affine_from_json(const nlohmann::json& j) {
    return AffineMap{j.at("shift").get<double>(), j.at("scale").get<double>()};
}

inline nlohmann::json to_json(const TrainedModel& m) {
    return {{"version", kModelFormatVersion}, {"params", to_json(m.params)},
            {"sigma", to_json(m.sigma)},      {"z_in", to_json(m.z_in)},
            {"x_out", to_json(m.x_out)},      {"y_out", to_json(m.y_out)}};
}

inline TrainedModel model_from_json(const nlohmann::json& j) {
    if (j.at("version").get<int>() != kModelFormatVersion)
        throw std::runtime_error("model_io: unsupported model format version");
    TrainedModel m;
    m.params = params_from_json(j.at("params"));
    m.sigma = bandwidths_from_json(j.at("sigma"));
    m.z_in = affine_from_json(j.at("z_in"));
    m.x_out = affine_from_json(j.at("x_out"));
    m.y_out = affine_from_json(j.at("y_out"));
    return m;
}

inline void save_model(const TrainedModel& m, const std::string& path) {
    std::ofstream out(path);
    if (!out) throw std::runtime_error("save_model: cannot open " + path);
    out << to_json(m).dump(2) << '\n';
}

inline TrainedModel load_model(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw std::runtime_error("load_model: cannot open " + path);
    nlohmann::json j;
    in >> j;
    return model_from_json(j);
}

inline void write_trace_csv(const TrainTrace& trace, const std::string& path) {
    std::ofstream out(path);
    if (!out) throw std::runtime_error("write_trace_csv: cannot open " + path);
    out << "iter,loss,loss_sigma,sigma_x,sigma_y,sigma_z\n";
    for (const auto& st : trace.iters)
        out << st.iter << ',' << format_double(st.loss) << ',' << format_double(st.loss_sigma)
            << ',' << format_double(st.sigma_x) << ',' << format_double(st.sigma_y) << ','
            << format_double(st.sigma_z) << '\n';
    out << "# stop," << to_string(trace.stop) << '\n';
}

}  // namespace congan
