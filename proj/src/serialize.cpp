#include "beamloc/serialize.hpp"

namespace beamloc {

namespace geometry {

void to_json(json& j, const GridArray& a) {
    json elems = json::array();
    for (const auto& e : a.elements) elems.push_back({e.x, e.y});
    j = {{"name", a.name},
         {"pitch_m", a.pitch_m},
         {"elements", elems},
         {"master_extent", a.master_extent}};
}

void from_json(const json& j, GridArray& a) {
    a.name = j.value("name", "custom");
    a.pitch_m = j.at("pitch_m").get<double>();
    a.master_extent = j.value("master_extent", 8);
    a.elements.clear();
    for (const auto& e : j.at("elements"))
        a.elements.push_back({e.at(0).get<int>(), e.at(1).get<int>()});
    std::sort(a.elements.begin(), a.elements.end());
    a.validate();
}

GridArray geometry_from_json(const json& j) {
    if (j.is_string()) {
        return make_geometry(parse_geometry_kind(j.get<std::string>()));
    }
    if (j.contains("elements")) return j.get<GridArray>();
    GeometryParams p;
    p.nx = j.value("nx", p.nx);
    p.ny = j.value("ny", p.ny);
    if (j.contains("nested_axis")) p.nested_axis = j.at("nested_axis").get<std::vector<int>>();
    p.box_w = j.value("box_w", p.box_w);
    p.box_h = j.value("box_h", p.box_h);
    p.bill_w = j.value("bill_w", p.bill_w);
    p.bill_h = j.value("bill_h", p.bill_h);
    p.coprime_a = j.value("coprime_a", p.coprime_a);
    p.coprime_b = j.value("coprime_b", p.coprime_b);
    p.coprime_span = j.value("coprime_span", p.coprime_span);
    p.random_count = j.value("random_count", p.random_count);
    p.seed = j.value("seed", p.seed);
    p.pitch_m = j.value("pitch_m", p.pitch_m);
    p.master_extent = j.value("master_extent", p.master_extent);
    return make_geometry(parse_geometry_kind(j.at("kind").get<std::string>()), p);
}

}  // namespace geometry

namespace sim {

void to_json(json& j, const WaveformSpec& w) {
    j = {{"kind", w.kind}, {"n", w.n}, {"q", w.q}};
}

void from_json(const json& j, WaveformSpec& w) {
    w.kind = j.value("kind", "sc");
    w.n = j.value("n", waveforms::kDefaultZcPrime);
    w.q = j.value("q", 1);
}

void to_json(json& j, const SourceSpec& s) {
    j = {{"phi_deg", rad_to_deg(s.azimuth)},
         {"theta_deg", rad_to_deg(s.elevation)},
         {"power", s.power},
         {"waveform", s.waveform}};
}

void from_json(const json& j, SourceSpec& s) {
    s.azimuth = deg_to_rad(j.at("phi_deg").get<double>());
    s.elevation = deg_to_rad(j.at("theta_deg").get<double>());
    s.power = j.value("power", 1.0);
    if (j.contains("waveform")) s.waveform = j.at("waveform").get<WaveformSpec>();
}

void to_json(json& j, const Scenario& s) {
    j = {{"array", s.array},
         {"sources", s.sources},
         {"snr_db", s.snr_db},
         {"snapshots", s.snapshots},
         {"sound_speed", s.sound_speed},
         {"sample_rate", s.sample_rate},
         {"carrier_hz", s.carrier_hz},
         {"bandwidth_hz", s.bandwidth_hz},
         {"symbol_s", s.symbol_s},
         {"seed", s.seed}};
}

void from_json(const json& j, Scenario& s) {
    s.array = geometry::geometry_from_json(j.at("array"));
    s.sources.clear();
    if (j.contains("sources"))
        for (const auto& e : j.at("sources")) s.sources.push_back(e.get<SourceSpec>());
    s.snr_db = j.value("snr_db", 20.0);
    s.snapshots = j.value("snapshots", 4096);
    s.sound_speed = j.value("sound_speed", 343.0);
    s.sample_rate = j.value("sample_rate", 48828.0);
    s.carrier_hz = j.value("carrier_hz", 18000.0);
    s.bandwidth_hz = j.value("bandwidth_hz", 1500.0);
    s.symbol_s = j.value("symbol_s", 0.5);
    s.seed = j.value("seed", 1);
}

}  // namespace sim

namespace loc {

void to_json(json& j, const Pose& p) {
    json r = json::array();
    for (int i = 0; i < 3; ++i)
        for (int k = 0; k < 3; ++k) r.push_back(p.rotation(i, k));
    j = {{"R", r}, {"p", {p.translation.x(), p.translation.y(), p.translation.z()}}};
}

void from_json(const json& j, Pose& p) {
    const auto& r = j.at("R");
    if (r.size() != 9) throw InvalidArgument("pose R must hold 9 row-major values");
    for (int i = 0; i < 3; ++i)
        for (int k = 0; k < 3; ++k) p.rotation(i, k) = r.at(3 * i + k).get<double>();
    const auto& t = j.at("p");
    p.translation = {t.at(0).get<double>(), t.at(1).get<double>(), t.at(2).get<double>()};
    p.validate();
}

}  // namespace loc

}  // namespace beamloc
