#include <cmath>
#include <set>

#include "evk/error.hpp"
#include "evk/pipeline.hpp"

namespace evk {

namespace {

template <class T>
void take(const nlohmann::json& j, const char* key, T& out) {
  if (!j.contains(key)) return;
  try {
    out = j.at(key).get<T>();
  } catch (const nlohmann::json::exception& e) {
    throw Error(ErrorKind::InvalidArgument, std::string("config field '") + key + "': " + e.what());
  }
}

[[noreturn]] void bad(const std::string& field, const std::string& why) {
  throw Error(ErrorKind::InvalidArgument, "config field '" + field + "' " + why);
}

}  // namespace

RunConfig RunConfig::from_json(const nlohmann::json& j) {
  if (!j.is_object()) throw Error(ErrorKind::InvalidArgument, "config must be a JSON object");
  static const std::set<std::string> known{"tau",         "n_views",           "dilation_percents",
                                           "consistency_threshold", "seed", "repaint_steps",
                                           "consistency_views",     "render_size", "embedder"};
  for (const auto& [k, v] : j.items())
    if (!known.count(k)) throw Error(ErrorKind::InvalidArgument, "unknown config field '" + k + "'");
  RunConfig c;
  take(j, "tau", c.tau);
  take(j, "n_views", c.n_views);
  take(j, "dilation_percents", c.dilation_percents);
  take(j, "consistency_threshold", c.consistency_threshold);
  take(j, "seed", c.seed);
  take(j, "repaint_steps", c.repaint_steps);
  take(j, "consistency_views", c.consistency_views);
  take(j, "render_size", c.render_size);
  take(j, "embedder", c.embedder);
  c.validate();
  return c;
}

nlohmann::json RunConfig::to_json() const {
  return {{"tau", tau},
          {"n_views", n_views},
          {"dilation_percents", dilation_percents},
          {"consistency_threshold", consistency_threshold},
          {"seed", seed},
          {"repaint_steps", repaint_steps},
          {"consistency_views", consistency_views},
          {"render_size", render_size},
          {"embedder", embedder}};
}

void RunConfig::validate() const {
  if (!(tau > 0 && tau <= 1)) bad("tau", "must be in (0, 1]");
  if (n_views < 1) bad("n_views", "must be >= 1");
  for (double p : dilation_percents)
    if (!(p >= 0) || !std::isfinite(p)) bad("dilation_percents", "entries must be finite and >= 0");
  if (!std::isfinite(consistency_threshold)) bad("consistency_threshold", "must be finite");
  if (repaint_steps < 1) bad("repaint_steps", "must be >= 1");
  if (consistency_views < 1) bad("consistency_views", "must be >= 1");
  if (render_size < 11) bad("render_size", "must be >= 11");
  if (embedder != "proxy" && embedder.rfind("file:", 0) != 0) bad("embedder", "must be 'proxy' or 'file:<dir>'");
}

}  // namespace evk
