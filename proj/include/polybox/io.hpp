#pragma once

#include <fstream>
#include <sstream>
#include <string>

#include <json.hpp>

#include "polybox/eval.hpp"
#include "polybox/geometry.hpp"
#include "polybox/loss.hpp"
#include "polybox/weighting.hpp"

// File formats: binary (P5) and plain-text (P2) PGM masks, JSON for
// PolyBox, LossVector, weight-state checkpoints, detections and manifests.

namespace polybox {

class IoError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

inline InstanceMask read_pgm(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open " + path);
  std::string magic;
  in >> magic;
  if (magic != "P5" && magic != "P2") throw IoError(path + ": not a P5/P2 PGM");

  auto next_token = [&in, &path]() -> long {
    // skips whitespace and '#' comment lines
    char c;
    while (in.get(c)) {
      if (c == '#') {
        std::string line;
        std::getline(in, line);
      } else if (!std::isspace(static_cast<unsigned char>(c))) {
        in.unget();
        long v;
        if (!(in >> v)) break;
        return v;
      }
    }
    throw IoError(path + ": truncated header");
  };

  const long w = next_token();
  const long h = next_token();
  const long maxval = next_token();
  if (w < 1 || h < 1 || maxval < 1 || maxval > 255)
    throw IoError(path + ": unsupported PGM dimensions or maxval");

  InstanceMask mask(static_cast<int>(w), static_cast<int>(h));
  if (magic == "P5") {
    in.get();  // single whitespace after maxval
    in.read(reinterpret_cast<char*>(mask.values.data()),
            static_cast<std::streamsize>(mask.values.size()));
    if (in.gcount() != static_cast<std::streamsize>(mask.values.size()))
      throw IoError(path + ": truncated pixel data");
  } else {
    for (auto& v : mask.values) {
      long x;
      if (!(in >> x)) throw IoError(path + ": truncated pixel data");
      v = static_cast<std::uint8_t>(x);
    }
  }
  return mask;
}

inline void write_pgm(const std::string& path, const InstanceMask& mask) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw IoError("cannot write " + path);
  out << "P5\n" << mask.width << " " << mask.height << "\n255\n";
  out.write(reinterpret_cast<const char*>(mask.values.data()),
            static_cast<std::streamsize>(mask.values.size()));
}

// --- JSON (nlohmann) ---

inline void to_json(nlohmann::json& j, const PolyBox& b) {
  j = nlohmann::json{{"cx", b.cx}, {"cy", b.cy}, {"radii", b.radii}};
}

inline void from_json(const nlohmann::json& j, PolyBox& b) {
  j.at("cx").get_to(b.cx);
  j.at("cy").get_to(b.cy);
  const auto& r = j.at("radii");
  if (r.size() != PolyBox::kNumPoints)
    throw IoError("PolyBox: radii must have exactly 24 entries");
  for (int k = 0; k < PolyBox::kNumPoints; ++k) b.radii[k] = r[k].get<double>();
  for (double v : b.radii) {
    if (!(v >= 0.0)) throw IoError("PolyBox: radii must be >= 0");
  }
}

inline void to_json(nlohmann::json& j, const LossVector& lv) {
  j = nlohmann::json{{"rect", lv.rect_losses}, {"poly", lv.poly_loss}};
  if (lv.circle_losses) j["circle"] = *lv.circle_losses;
}

inline void to_json(nlohmann::json& j, const Detection& d) {
  j = nlohmann::json{
      {"image_id", d.image_id}, {"class_id", d.class_id}, {"score", d.score}, {"box", d.box}};
}

inline void from_json(const nlohmann::json& j, Detection& d) {
  j.at("image_id").get_to(d.image_id);
  j.at("class_id").get_to(d.class_id);
  j.at("score").get_to(d.score);
  j.at("box").get_to(d.box);
  if (d.score < 0.0 || d.score > 1.0) throw IoError("Detection: score must be in [0,1]");
}

inline void to_json(nlohmann::json& j, const GroundTruthRecord& g) {
  j = nlohmann::json{{"image_id", g.image_id}, {"class_id", g.class_id}, {"box", g.box}};
}

inline void from_json(const nlohmann::json& j, GroundTruthRecord& g) {
  j.at("image_id").get_to(g.image_id);
  j.at("class_id").get_to(g.class_id);
  j.at("box").get_to(g.box);
}

inline void to_json(nlohmann::json& j, const ImageInfo& im) {
  j = nlohmann::json{{"id", im.id}, {"width", im.width}, {"height", im.height}};
}

inline void from_json(const nlohmann::json& j, ImageInfo& im) {
  j.at("id").get_to(im.id);
  j.at("width").get_to(im.width);
  j.at("height").get_to(im.height);
}

inline void to_json(nlohmann::json& j, const DatasetManifest& m) {
  j = nlohmann::json{{"images", m.images}, {"annotations", m.annotations}};
}

inline void from_json(const nlohmann::json& j, DatasetManifest& m) {
  j.at("images").get_to(m.images);
  j.at("annotations").get_to(m.annotations);
}

inline nlohmann::json weight_state_to_json(const WeightState& s) {
  return nlohmann::json{{"epoch", s.epoch()},
                        {"last_loss", s.last_loss()},
                        {"running_mean", s.running_mean()},
                        {"temperature", s.temperature()},
                        {"ratio_mode", s.ratio_mode() == RatioMode::mean ? "mean" : "previous"}};
}

inline WeightState weight_state_from_json(const nlohmann::json& j) {
  const auto last = j.at("last_loss").get<std::vector<double>>();
  WeightState s(last.size(), j.at("temperature").get<double>(),
                j.at("ratio_mode").get<std::string>() == "mean" ? RatioMode::mean
                                                                : RatioMode::previous);
  s.restore(j.at("epoch").get<long>(), last, j.at("running_mean").get<std::vector<double>>());
  return s;
}

inline PolyBox read_polybox(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot open " + path);
  nlohmann::json j;
  try {
    in >> j;
    return j.get<PolyBox>();
  } catch (const nlohmann::json::exception& e) {
    throw IoError(path + ": " + e.what());
  }
}

inline std::vector<Detection> read_detections_jsonl(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot open " + path);
  std::vector<Detection> dets;
  std::string line;
  std::size_t lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    if (line.find_first_not_of(" \t\r\n") == std::string::npos) continue;
    try {
      dets.push_back(nlohmann::json::parse(line).get<Detection>());
    } catch (const nlohmann::json::exception& e) {
      throw IoError(path + " line " + std::to_string(lineno) + ": " + e.what());
    }
  }
  return dets;
}

inline DatasetManifest read_manifest(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot open " + path);
  try {
    nlohmann::json j;
    in >> j;
    return j.get<DatasetManifest>();
  } catch (const nlohmann::json::exception& e) {
    throw IoError(path + ": " + e.what());
  }
}

}  // namespace polybox
