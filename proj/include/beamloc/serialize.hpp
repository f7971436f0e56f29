#pragma once

#include <json.hpp>

#include "beamloc/loc.hpp"

namespace beamloc {

using nlohmann::json;

namespace geometry {
void to_json(json& j, const GridArray& a);
void from_json(const json& j, GridArray& a);

/// Accepts either an explicit element list or {"kind": ..., per-kind params}.
GridArray geometry_from_json(const json& j);
}  // namespace geometry

namespace sim {
void to_json(json& j, const WaveformSpec& w);
void from_json(const json& j, WaveformSpec& w);
void to_json(json& j, const SourceSpec& s);
void from_json(const json& j, SourceSpec& s);
void to_json(json& j, const Scenario& s);
void from_json(const json& j, Scenario& s);
}  // namespace sim

namespace loc {
void to_json(json& j, const Pose& p);  // {"R": 9 row-major, "p": 3}
void from_json(const json& j, Pose& p);
}  // namespace loc

}  // namespace beamloc
