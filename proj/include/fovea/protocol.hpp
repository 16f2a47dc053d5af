#pragma once

#include <optional>
#include <string>
#include <vector>

#include <boost/beast/core/detail/base64.hpp>

#include "fovea/runtime.hpp"

namespace fovea::protocol {

inline std::string base64(const std::string& bytes) {
  namespace b64 = boost::beast::detail::base64;
  std::string out(b64::encoded_size(bytes.size()), '\0');
  out.resize(b64::encode(out.data(), bytes.data(), bytes.size()));
  return out;
}

inline std::string unbase64(const std::string& text) {
  namespace b64 = boost::beast::detail::base64;
  std::size_t pad = 0;
  while (pad < 2 && pad < text.size() && text[text.size() - 1 - pad] == '=') ++pad;
  require(text.size() % 4 == 0, "invalid base64 payload");
  std::string out(b64::decoded_size(text.size()), '\0');
  const auto [written, read] = b64::decode(out.data(), text.data(), text.size());
  require(read >= text.size() - pad, "invalid base64 payload");
  out.resize(written);
  return out;
}

/// 255 on hr-pixels whose right or lower neighbour lies in another cell.
inline Image grid_overlay(const CellGrid& g) {
  Image img(g.width(), g.height());
  for (int y = 0; y < g.height(); ++y)
    for (int x = 0; x < g.width(); ++x) {
      const auto c = g.cell_at(x, y);
      const bool edge = (x + 1 < g.width() && g.cell_at(x + 1, y) != c) || (y + 1 < g.height() && g.cell_at(x, y + 1) != c);
      img.at(x, y) = edge ? 1.0 : 0.0;
    }
  return img;
}

inline json message(const char* type) { return json{{"schema", schema_version}, {"type", type}}; }

inline json error_message(const std::string& what) {
  json j = message("error");
  j["message"] = what;
  return j;
}

inline json subframe_message(const SessionOutput& out, std::size_t i) {
  const auto& sf = out.subframes[i];
  json j = message("subframe");
  j["index"] = i;
  j["t_start"] = sf.t_start;
  j["t_end"] = sf.t_end;
  j["width"] = sf.grid->width();
  j["height"] = sf.grid->height();
  j["cell_count"] = sf.cell_count();
  j["grid_fingerprint"] = sf.grid->fingerprint();
  if (i < out.subframe_info.size()) {
    j["fixation"] = out.subframe_info[i].fixation;
    j["shift_index"] = out.subframe_info[i].shift_index;
    j["fovea_center"] = {out.subframe_info[i].fovea_center.x, out.subframe_info[i].fovea_center.y};
  }
  j["image"] = base64(encode_pgm(sf.image()));
  j["grid_overlay"] = base64(encode_pgm(grid_overlay(*sf.grid)));
  return j;
}

inline json blip_message(const SessionOutput& out, std::size_t i) {
  json j = message("blip");
  j["index"] = i;
  j["t_start"] = out.blips[i].t_start;
  j["t_end"] = out.blips[i].t_end;
  j["image"] = base64(encode_pgm(out.blips[i].field));
  return j;
}

inline json composite_message(const SessionOutput& out, std::size_t i, double max_exposure) {
  const auto& c = out.composites[i];
  json j = composite_sidecar(c, i);
  j["type"] = "composite";
  j["width"] = c.composite.image.width;
  j["height"] = c.composite.image.height;
  j["image"] = base64(encode_pgm(c.composite.image));
  j["exposure"] = base64(exposure_false_colour(c.composite, max_exposure));
  return j;
}

inline json decision_message(const SessionOutput& out, std::size_t i) {
  json j = decision_to_json(out.decisions[i].decision);
  j["schema"] = schema_version;
  j["type"] = "decision";
  j["fixation"] = out.decisions[i].fixation;
  return j;
}

/// Parsed inbound message.
struct Inbound {
  enum class Action { control, pause, resume, step, status };
  Action action = Action::status;
  std::vector<Control> controls;
};

/// Validates and parses one inbound text frame; throws InvalidArgument.
inline Inbound parse_inbound(const std::string& text, int width, int height) {
  json j;
  try {
    j = json::parse(text);
  } catch (const json::exception& e) {
    throw InvalidArgument(std::string("inbound message is not JSON: ") + e.what());
  }
  require(j.is_object(), "inbound message must be a JSON object");
  require(j.contains("schema") && j["schema"].is_number_integer() && j["schema"].get<int>() == schema_version,
          "inbound message must carry \"schema\": " + std::to_string(schema_version));
  require(j.contains("type") && j["type"].is_string(), "inbound message needs a string \"type\"");
  const auto type = j["type"].get<std::string>();
  Inbound in;
  auto number = [&](const char* key) {
    require(j[key].is_number(), std::string("\"") + key + "\" must be a number");
    return j[key].get<double>();
  };
  if (type == "click") {
    require(j.contains("x") && j.contains("y") && j["x"].is_number_integer() && j["y"].is_number_integer(),
            "click needs integer \"x\" and \"y\"");
    const int x = j["x"].get<int>(), y = j["y"].get<int>();
    require(x >= 0 && y >= 0 && x < width && y < height, "click (" + std::to_string(x) + "," + std::to_string(y) +
                                                              ") lies outside the field");
    in.action = Inbound::Action::control;
    in.controls.push_back(Control::make_click(x, y));
  } else if (type == "mode") {
    require(j.contains("mode") && j["mode"].is_string(), "mode message needs a string \"mode\"");
    const auto m = acquisition_mode_from_string(j["mode"].get<std::string>());
    require(m != AcquisitionMode::uniform_baseline, "uniform-baseline cannot be selected during a session");
    in.action = Inbound::Action::control;
    in.controls.push_back(Control::make_mode(m));
  } else if (type == "set") {
    in.action = Inbound::Action::control;
    if (j.contains("lambda")) {
      const double v = number("lambda");
      require(v >= 0 && std::isfinite(v), "lambda must be finite and non-negative");
      in.controls.push_back(Control::make_lambda(v));
    }
    if (j.contains("tau")) {
      const double v = number("tau");
      require(v >= 0 && std::isfinite(v), "tau must be finite and non-negative");
      in.controls.push_back(Control::make_tau(v));
    }
    if (j.contains("p_jump")) {
      const double v = number("p_jump");
      require(v >= 0 && v <= 1, "p_jump must be in [0, 1]");
      in.controls.push_back(Control::make_p_jump(v));
    }
    require(!in.controls.empty(), "set message needs \"lambda\", \"tau\" or \"p_jump\"");
  } else if (type == "pause") {
    in.action = Inbound::Action::pause;
  } else if (type == "resume") {
    in.action = Inbound::Action::resume;
  } else if (type == "step") {
    in.action = Inbound::Action::step;
  } else if (type == "status") {
    in.action = Inbound::Action::status;
  } else {
    throw InvalidArgument("unknown inbound message type '" + type + "'");
  }
  return in;
}

/// Socket-free gateway core: owns the session, applies inbound messages and
/// turns each step into outbound messages.
class Controller {
 public:
  Controller(AcquisitionPlan plan, DynamicScene scene, double duration, bool start_paused = false)
      : session_(std::move(plan), std::move(scene), duration), paused_(start_paused) {}

  Session& session() noexcept { return session_; }
  bool paused() const noexcept { return paused_; }
  bool finished() const noexcept { return session_.finished(); }
  /// Sim-time length of the next fixation, for real-time pacing.
  double fixation_seconds() const {
    const auto& p = session_.plan();
    return p.fixation_length * p.subframe_period();
  }

  json status() const {
    json j = message("status");
    j["state"] = session_.finished() ? "finished" : paused_ ? "paused" : "running";
    j["clock"] = session_.clock();
    j["fixation"] = session_.fixation_index();
    j["mode"] = to_string(session_.mode());
    j["lambda"] = session_.lambda();
    j["tau"] = session_.tau();
    j["width"] = session_.plan().width;
    j["height"] = session_.plan().height;
    return j;
  }

  /// Returns messages to send back; malformed input yields one error message
  /// and leaves the session untouched.
  std::vector<json> handle_inbound(const std::string& text) {
    Inbound in;
    try {
      in = parse_inbound(text, session_.plan().width, session_.plan().height);
    } catch (const InvalidArgument& e) {
      return {error_message(e.what())};
    }
    switch (in.action) {
      case Inbound::Action::control:
        try {
          for (const auto& c : in.controls) session_.submit(c);
        } catch (const InvalidArgument& e) {
          return {error_message(e.what())};
        }
        return {};
      case Inbound::Action::pause:
        paused_ = true;
        return {status()};
      case Inbound::Action::resume:
        paused_ = false;
        return {status()};
      case Inbound::Action::step:
        return step();
      case Inbound::Action::status:
        return {status()};
    }
    return {};
  }

  /// Advances one fixation and returns its messages in acquisition order.
  std::vector<json> step() {
    std::vector<json> msgs;
    if (session_.finished()) return msgs;
    StepResult r;
    try {
      r = session_.step();
    } catch (const InvalidArgument& e) {
      msgs.push_back(error_message(e.what()));
      return msgs;
    }
    const auto& out = session_.output();
    if (r.blip) msgs.push_back(blip_message(out, *r.blip));
    if (r.decision) msgs.push_back(decision_message(out, *r.decision));
    // Sub-frames and their real-time composites interleave; the fixation's
    // linear-constraints composite (if any) comes last.
    std::size_t ci = 0;
    for (auto s : r.subframes) {
      msgs.push_back(subframe_message(out, s));
      while (ci < r.composites.size() && out.composites[r.composites[ci]].after_subframe <= s &&
             out.composites[r.composites[ci]].kind == CompositeRecord::Kind::weighted_average) {
        msgs.push_back(composite_message(out, r.composites[ci], session_.plan().max_exposure));
        ++ci;
      }
    }
    for (; ci < r.composites.size(); ++ci)
      msgs.push_back(composite_message(out, r.composites[ci], session_.plan().max_exposure));
    if (r.finished) msgs.push_back(status());
    return msgs;
  }

 private:
  Session session_;
  bool paused_;
};

}  // namespace fovea::protocol
