/* Copyright 2026 The Photocal Authors. All Rights Reserved.
Licensed under the Apache License, Version 2.0 (the "License");
you may not use this file except in compliance with the License.
You may obtain a copy of the License at
    http://www.apache.org/licenses/LICENSE-2.0
Unless required by applicable law or agreed to in writing, software
distributed under the License is distributed on an "AS IS" BASIS,
WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
See the License for the specific language governing permissions and
limitations under the License.
==============================================================================*/

#pragma once

#include <algorithm>
#include <cstdint>
#include <sstream>
#include <string>
#include <vector>

#include "photocal/util.hpp"

namespace photocal {

/// One 2x2 coupler acting on the adjacent mode pair (top_mode, top_mode+1):
/// a beam splitter, optionally followed by a thermo-optic phase shifter on
/// the lower (higher-index) arm. ps_index < 0 means no shifter.
struct Unit {
  int top_mode = 0;
  int bs_index = 0;
  int ps_index = -1;

  bool has_shifter() const { return ps_index >= 0; }
};

struct Layer {
  std::vector<Unit> units;
};

/// Topology of a layered mesh of 2x2 units on adjacent optical modes.
/// Immutable after construction; safe to share across threads.
struct CircuitSpec {
  int steps = 0;       // circuit depth T
  int mode_count = 0;  // 2T
  int input_mode = 0;  // mode carrying the localized input state
  int bs_count = 0;
  int ps_count = 0;
  std::vector<Layer> layers;
  std::vector<std::uint8_t> port_mask;  // 1 = observed output port

  /// Indices of the observed output ports, top to bottom.
  std::vector<int> active_ports() const {
    std::vector<int> ports;
    for (int m = 0; m < mode_count; ++m) {
      if (port_mask[m]) ports.push_back(m);
    }
    return ports;
  }

  int active_port_count() const {
    return static_cast<int>(active_ports().size());
  }
};

/// Builds the light-cone mesh realizing a T-step discrete-time walk in path
/// encoding: layer t (1-based) holds t units at top modes {T - t + 2k},
/// so consecutive layers overlap by one mode and implement the shift
/// implicitly. Units in the final layer carry no phase shifter. Component
/// indices run layer by layer, top to bottom within a layer.
///
/// Defaults: the input enters the lower arm of the single first-layer unit
/// (mode T, counting 0..2T-1 from the top), and the two outermost ports on
/// each edge are masked out.
inline CircuitSpec build_qw_mesh(int steps) {
  if (steps < 1) {
    throw ConfigError("build_qw_mesh: steps must be >= 1");
  }
  if (steps > (1 << 20)) {
    throw ConfigError("build_qw_mesh: steps too large for mode indexing");
  }
  CircuitSpec spec;
  spec.steps = steps;
  spec.mode_count = 2 * steps;
  spec.input_mode = steps;
  spec.layers.resize(steps);
  int bs = 0;
  int ps = 0;
  for (int t = 1; t <= steps; ++t) {
    Layer& layer = spec.layers[t - 1];
    layer.units.resize(t);
    for (int k = 0; k < t; ++k) {
      Unit& u = layer.units[k];
      u.top_mode = steps - t + 2 * k;
      u.bs_index = bs++;
      u.ps_index = (t < steps) ? ps++ : -1;
    }
  }
  spec.bs_count = bs;
  spec.ps_count = ps;
  spec.port_mask.assign(spec.mode_count, 1);
  // The four edge ports carry almost no light and are not observed. Masking
  // them only makes sense once some ports remain (depth >= 3).
  if (steps >= 3) {
    spec.port_mask[0] = 0;
    spec.port_mask[1] = 0;
    spec.port_mask[spec.mode_count - 2] = 0;
    spec.port_mask[spec.mode_count - 1] = 0;
  }
  return spec;
}

/// Checks every CircuitSpec invariant; throws ConfigError naming the first
/// violated one.
inline void validate_mesh(const CircuitSpec& spec) {
  const int T = spec.steps;
  if (T < 1) throw ConfigError("validate_mesh: steps must be >= 1");
  if (spec.mode_count != 2 * T) {
    throw ConfigError("validate_mesh: count mismatch (mode_count != 2*steps)");
  }
  if (static_cast<int>(spec.layers.size()) != T) {
    throw ConfigError("validate_mesh: count mismatch (layer count != steps)");
  }
  if (spec.input_mode < 0 || spec.input_mode >= spec.mode_count) {
    throw ConfigError("validate_mesh: input_mode out of range");
  }
  if (static_cast<int>(spec.port_mask.size()) != spec.mode_count) {
    throw ConfigError("validate_mesh: port_mask size != mode_count");
  }
  if (spec.bs_count != T * (T + 1) / 2 ||
      spec.ps_count != spec.bs_count - T) {
    throw ConfigError("validate_mesh: count mismatch (bs/ps counts)");
  }
  std::vector<int> bs_seen(spec.bs_count, 0);
  std::vector<int> ps_seen(std::max(spec.ps_count, 0), 0);
  int bs_total = 0;
  int ps_total = 0;
  for (int t = 1; t <= T; ++t) {
    const Layer& layer = spec.layers[t - 1];
    if (static_cast<int>(layer.units.size()) != t) {
      throw ConfigError("validate_mesh: layer " + std::to_string(t) +
                        " does not hold exactly " + std::to_string(t) +
                        " units");
    }
    std::vector<std::uint8_t> occupied(spec.mode_count, 0);
    for (const Unit& u : layer.units) {
      if (u.top_mode < 0 || u.top_mode + 1 >= spec.mode_count) {
        throw ConfigError("validate_mesh: unit mode pair out of range");
      }
      if (occupied[u.top_mode] || occupied[u.top_mode + 1]) {
        throw ConfigError("validate_mesh: overlapping units in layer " +
                          std::to_string(t));
      }
      occupied[u.top_mode] = occupied[u.top_mode + 1] = 1;
      if (u.bs_index < 0 || u.bs_index >= spec.bs_count) {
        throw ConfigError("validate_mesh: beam-splitter index out of range");
      }
      if (bs_seen[u.bs_index]++) {
        throw ConfigError("validate_mesh: duplicate beam-splitter index " +
                          std::to_string(u.bs_index));
      }
      ++bs_total;
      if (t == T) {
        if (u.has_shifter()) {
          throw ConfigError(
              "validate_mesh: final-layer unit carries a phase shifter");
        }
      } else {
        if (!u.has_shifter()) {
          throw ConfigError("validate_mesh: unit in layer " +
                            std::to_string(t) + " lacks a phase shifter");
        }
        if (u.ps_index >= spec.ps_count) {
          throw ConfigError("validate_mesh: phase-shifter index out of range");
        }
        if (ps_seen[u.ps_index]++) {
          throw ConfigError("validate_mesh: duplicate phase-shifter index " +
                            std::to_string(u.ps_index));
        }
        ++ps_total;
      }
    }
  }
  if (bs_total != spec.bs_count || ps_total != spec.ps_count) {
    throw ConfigError("validate_mesh: count mismatch (indices vs counts)");
  }
}

/// Active output port indices in top-to-bottom order.
inline std::vector<int> masked_ports(const CircuitSpec& spec) {
  return spec.active_ports();
}

/// Versioned plain-text form; round-trips losslessly through parse_spec.
inline std::string serialize_spec(const CircuitSpec& spec) {
  std::ostringstream out;
  out << "photocal-mesh v1\n";
  out << "steps " << spec.steps << "\n";
  out << "modes " << spec.mode_count << "\n";
  out << "input " << spec.input_mode << "\n";
  out << "mask ";
  for (auto m : spec.port_mask) out << (m ? '1' : '0');
  out << "\n";
  for (int t = 1; t <= spec.steps; ++t) {
    out << "layer";
    for (const Unit& u : spec.layers[t - 1].units) {
      out << " " << u.top_mode << ":" << u.bs_index << ":";
      if (u.has_shifter()) {
        out << u.ps_index;
      } else {
        out << "-";
      }
    }
    out << "\n";
  }
  return out.str();
}

inline CircuitSpec parse_spec(const std::string& text) {
  std::istringstream in(text);
  std::string line;
  if (!std::getline(in, line) || line != "photocal-mesh v1") {
    throw IoError("parse_spec: missing 'photocal-mesh v1' header");
  }
  CircuitSpec spec;
  auto expect_int = [](const std::string& l, const std::string& key) {
    std::istringstream ls(l);
    std::string k;
    long v = 0;
    if (!(ls >> k >> v) || k != key) {
      throw IoError("parse_spec: expected '" + key + "' line, got '" + l +
                    "'");
    }
    return static_cast<int>(v);
  };
  if (!std::getline(in, line)) throw IoError("parse_spec: truncated");
  spec.steps = expect_int(line, "steps");
  if (!std::getline(in, line)) throw IoError("parse_spec: truncated");
  spec.mode_count = expect_int(line, "modes");
  if (!std::getline(in, line)) throw IoError("parse_spec: truncated");
  spec.input_mode = expect_int(line, "input");
  if (!std::getline(in, line)) throw IoError("parse_spec: truncated");
  {
    std::istringstream ls(line);
    std::string k, bits;
    if (!(ls >> k >> bits) || k != "mask") {
      throw IoError("parse_spec: expected 'mask' line");
    }
    for (char c : bits) {
      if (c != '0' && c != '1') throw IoError("parse_spec: bad mask bit");
      spec.port_mask.push_back(c == '1');
    }
  }
  int bs = 0;
  int ps = 0;
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    std::istringstream ls(line);
    std::string k;
    ls >> k;
    if (k != "layer") throw IoError("parse_spec: expected 'layer' line");
    Layer layer;
    std::string tok;
    while (ls >> tok) {
      Unit u;
      std::size_t c1 = tok.find(':');
      std::size_t c2 = tok.find(':', c1 + 1);
      if (c1 == std::string::npos || c2 == std::string::npos) {
        throw IoError("parse_spec: bad unit token '" + tok + "'");
      }
      u.top_mode = std::stoi(tok.substr(0, c1));
      u.bs_index = std::stoi(tok.substr(c1 + 1, c2 - c1 - 1));
      std::string pstok = tok.substr(c2 + 1);
      u.ps_index = (pstok == "-") ? -1 : std::stoi(pstok);
      bs = std::max(bs, u.bs_index + 1);
      if (u.has_shifter()) ps = std::max(ps, u.ps_index + 1);
      layer.units.push_back(u);
    }
    spec.layers.push_back(std::move(layer));
  }
  spec.bs_count = bs;
  spec.ps_count = ps;
  return spec;
}

/// Compact identity string used to tie datasets and reports to a topology.
inline std::string spec_fingerprint(const CircuitSpec& spec) {
  const std::string text = serialize_spec(spec);
  std::uint64_t h = 1469598103934665603ULL;  // FNV-1a
  for (unsigned char c : text) {
    h ^= c;
    h *= 1099511628211ULL;
  }
  char buf[64];
  std::snprintf(buf, sizeof buf, "qw-T%d-%dm-%016llx", spec.steps,
                spec.mode_count, static_cast<unsigned long long>(h));
  return buf;
}

}  // namespace photocal
