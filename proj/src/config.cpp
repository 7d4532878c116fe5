#include "dfnet/config.hpp"

#include <charconv>
#include <fstream>
#include <functional>
#include <iterator>
#include <sstream>
#include <vector>

#include "dfnet/csv.hpp"
#include "dfnet/errors.hpp"

namespace dfnet {

WeightMode parse_weight_mode(std::string_view token) {
  if (token == "dynamic") return WeightMode::dynamic;
  if (token == "uniform") return WeightMode::uniform;
  if (token == "global") return WeightMode::global;
  throw ConfigError("weights.mode must be dynamic|uniform|global, got '" + std::string(token) + "'");
}

std::string_view to_string(WeightMode mode) {
  switch (mode) {
    case WeightMode::dynamic:
      return "dynamic";
    case WeightMode::uniform:
      return "uniform";
    case WeightMode::global:
      return "global";
  }
  return "dynamic";
}

void RunConfig::validate() const {
  model.validate();
  data.validate();
  if (weight_mode != WeightMode::uniform) weights.validate();
  if (!(lr > 0.0)) throw ConfigError("optimizer.lr must be > 0");
  if (!(momentum >= 0.0 && momentum < 1.0)) throw ConfigError("optimizer.momentum must be in [0, 1)");
  if (batch_size == 0) throw ConfigError("batch_size must be positive");
  if (data_dir.empty()) {
    if (data.height != model.input_h || data.width != model.input_w) {
      throw ConfigError("data size must match model input size");
    }
    if (scenes == 0) throw ConfigError("data.scenes must be positive");
  }
  if (model.classes != data.class_count) throw ConfigError("model.classes must match data.class_count");
}

namespace {

std::string_view trim(std::string_view s) {
  const auto b = s.find_first_not_of(" \t\r\n");
  if (b == std::string_view::npos) return {};
  const auto e = s.find_last_not_of(" \t\r\n");
  return s.substr(b, e - b + 1);
}

template <typename T>
T parse_number(std::string_view key, std::string_view text) {
  T value{};
  const char* end = text.data() + text.size();
  auto [ptr, ec] = std::from_chars(text.data(), end, value);
  if (ec != std::errc() || ptr != end) {
    throw ConfigError("config key '" + std::string(key) + "': cannot parse '" + std::string(text) + "'");
  }
  return value;
}

template <typename T>
std::vector<T> parse_list(std::string_view key, std::string_view text) {
  std::vector<T> out;
  text = trim(text);
  if (text.empty()) return out;
  while (true) {
    const auto comma = text.find(',');
    out.push_back(parse_number<T>(key, trim(text.substr(0, comma))));
    if (comma == std::string_view::npos) break;
    text = text.substr(comma + 1);
  }
  return out;
}

template <typename T>
std::string join(const T& values) {
  std::ostringstream os;
  bool first = true;
  for (const auto& v : values) {
    if (!first) os << ',';
    first = false;
    if constexpr (std::is_floating_point_v<std::decay_t<decltype(v)>>) {
      os << format_double(v);
    } else {
      os << v;
    }
  }
  return os.str();
}

struct Field {
  std::string key;
  std::function<void(RunConfig&, std::string_view)> set;
  std::function<std::string(const RunConfig&)> get;
};

template <typename T, typename Access>
Field number_field(std::string key, Access access) {
  return Field{
      key,
      [key, access](RunConfig& c, std::string_view v) { access(c) = parse_number<T>(key, v); },
      [access](const RunConfig& c) {
        const T v = access(const_cast<RunConfig&>(c));
        if constexpr (std::is_floating_point_v<T>) {
          return format_double(v);
        } else {
          return std::to_string(v);
        }
      }};
}

const std::vector<Field>& fields() {
  static const std::vector<Field> table = [] {
    std::vector<Field> f;
    f.push_back(number_field<std::uint64_t>("seed", [](RunConfig& c) -> auto& { return c.seed; }));
    f.push_back(number_field<std::size_t>("iterations", [](RunConfig& c) -> auto& { return c.iterations; }));
    f.push_back(number_field<std::size_t>("batch_size", [](RunConfig& c) -> auto& { return c.batch_size; }));
    f.push_back(number_field<std::size_t>("log_every", [](RunConfig& c) -> auto& { return c.log_every; }));
    f.push_back({"out_dir", [](RunConfig& c, std::string_view v) { c.out_dir = std::string(v); },
                 [](const RunConfig& c) { return c.out_dir; }});
    f.push_back({"loss", [](RunConfig& c, std::string_view v) { c.loss = parse_loss_kind(v); },
                 [](const RunConfig& c) { return std::string(to_string(c.loss)); }});
    f.push_back({"weights.mode",
                 [](RunConfig& c, std::string_view v) { c.weight_mode = parse_weight_mode(v); },
                 [](const RunConfig& c) { return std::string(to_string(c.weight_mode)); }});
    f.push_back(number_field<double>("weights.beta", [](RunConfig& c) -> auto& { return c.weights.beta; }));
    f.push_back(number_field<double>("weights.alpha", [](RunConfig& c) -> auto& { return c.weights.alpha; }));
    f.push_back(number_field<double>("optimizer.lr", [](RunConfig& c) -> auto& { return c.lr; }));
    f.push_back(number_field<double>("optimizer.momentum", [](RunConfig& c) -> auto& { return c.momentum; }));

    f.push_back(number_field<std::size_t>("model.classes", [](RunConfig& c) -> auto& { return c.model.classes; }));
    f.push_back(number_field<std::size_t>("model.growth_rate",
                                          [](RunConfig& c) -> auto& { return c.model.growth_rate; }));
    f.push_back({"model.layers_per_block",
                 [](RunConfig& c, std::string_view v) {
                   auto list = parse_list<std::size_t>("model.layers_per_block", v);
                   if (list.size() != 4) throw ConfigError("model.layers_per_block needs 4 entries");
                   std::copy(list.begin(), list.end(), c.model.layers_per_block.begin());
                 },
                 [](const RunConfig& c) { return join(c.model.layers_per_block); }});
    f.push_back(number_field<std::size_t>("model.stem_channels",
                                          [](RunConfig& c) -> auto& { return c.model.stem_channels; }));
    f.push_back({"model.pyramid_bins",
                 [](RunConfig& c, std::string_view v) {
                   c.model.pyramid_bins = parse_list<std::size_t>("model.pyramid_bins", v);
                 },
                 [](const RunConfig& c) { return join(c.model.pyramid_bins); }});
    f.push_back(number_field<std::size_t>("model.pyramid_channels",
                                          [](RunConfig& c) -> auto& { return c.model.pyramid_channels; }));
    f.push_back(number_field<std::size_t>("model.head_channels",
                                          [](RunConfig& c) -> auto& { return c.model.head_channels; }));
    f.push_back({"model.rfb", [](RunConfig& c, std::string_view v) { c.model.rfb = parse_rfb_token(v); },
                 [](const RunConfig& c) { return std::string(rfb_token(c.model.rfb)); }});
    f.push_back({"model.rfb_activation",
                 [](RunConfig& c, std::string_view v) { c.model.rfb_activation = parse_path_activation(v); },
                 [](const RunConfig& c) { return std::string(to_string(c.model.rfb_activation)); }});
    f.push_back({"model.aux_tap", [](RunConfig& c, std::string_view v) { c.model.aux_tap = parse_aux_tap(v); },
                 [](const RunConfig& c) { return std::string(to_string(c.model.aux_tap)); }});
    f.push_back(number_field<double>("model.aux_weight", [](RunConfig& c) -> auto& { return c.model.aux_weight; }));
    f.push_back(number_field<std::size_t>("model.input_height", [](RunConfig& c) -> auto& { return c.model.input_h; }));
    f.push_back(number_field<std::size_t>("model.input_width", [](RunConfig& c) -> auto& { return c.model.input_w; }));

    f.push_back(number_field<std::size_t>("data.scenes", [](RunConfig& c) -> auto& { return c.scenes; }));
    f.push_back(number_field<std::uint64_t>("data.seed", [](RunConfig& c) -> auto& { return c.data.seed; }));
    f.push_back(number_field<std::size_t>("data.height", [](RunConfig& c) -> auto& { return c.data.height; }));
    f.push_back(number_field<std::size_t>("data.width", [](RunConfig& c) -> auto& { return c.data.width; }));
    f.push_back(number_field<std::size_t>("data.class_count", [](RunConfig& c) -> auto& { return c.data.class_count; }));
    f.push_back(number_field<std::size_t>("data.line_width", [](RunConfig& c) -> auto& { return c.data.line_width; }));
    f.push_back(number_field<std::size_t>("data.dash_period", [](RunConfig& c) -> auto& { return c.data.dash_period; }));
    f.push_back(number_field<double>("data.dash_duty", [](RunConfig& c) -> auto& { return c.data.dash_duty; }));
    f.push_back(number_field<std::size_t>("data.lines_min", [](RunConfig& c) -> auto& { return c.data.lines_min; }));
    f.push_back(number_field<std::size_t>("data.lines_max", [](RunConfig& c) -> auto& { return c.data.lines_max; }));
    f.push_back(number_field<double>("data.noise_std", [](RunConfig& c) -> auto& { return c.data.noise_std; }));
    f.push_back({"data.absent_classes",
                 [](RunConfig& c, std::string_view v) {
                   c.data.absent_classes = parse_list<std::int32_t>("data.absent_classes", v);
                 },
                 [](const RunConfig& c) { return join(c.data.absent_classes); }});
    f.push_back({"data.split",
                 [](RunConfig& c, std::string_view v) {
                   auto list = parse_list<double>("data.split", v);
                   if (list.size() != 3) throw ConfigError("data.split needs 3 fractions");
                   std::copy(list.begin(), list.end(), c.split.begin());
                 },
                 [](const RunConfig& c) { return join(c.split); }});
    f.push_back({"data.dir", [](RunConfig& c, std::string_view v) { c.data_dir = std::string(v); },
                 [](const RunConfig& c) { return c.data_dir; }});
    return f;
  }();
  return table;
}

const Field& find_field(std::string_view key) {
  for (const auto& f : fields()) {
    if (f.key == key) return f;
  }
  throw ConfigError("unknown config key '" + std::string(key) + "'");
}

void apply_line(RunConfig& cfg, std::string_view line, std::size_t lineno) {
  const auto eq = line.find('=');
  if (eq == std::string_view::npos) {
    throw ConfigError("config line " + std::to_string(lineno) + ": expected 'key = value'");
  }
  const auto key = trim(line.substr(0, eq));
  find_field(key).set(cfg, trim(line.substr(eq + 1)));
}

}  // namespace

RunConfig parse_run_config(std::string_view text) {
  RunConfig cfg;
  std::size_t lineno = 0;
  while (!text.empty()) {
    ++lineno;
    const auto nl = text.find('\n');
    std::string_view line = text.substr(0, nl);
    text = nl == std::string_view::npos ? std::string_view{} : text.substr(nl + 1);
    if (const auto hash = line.find('#'); hash != std::string_view::npos) line = line.substr(0, hash);
    line = trim(line);
    if (line.empty()) continue;
    apply_line(cfg, line, lineno);
  }
  return cfg;
}

void apply_override(RunConfig& cfg, std::string_view assignment) { apply_line(cfg, trim(assignment), 0); }

std::string serialize_run_config(const RunConfig& cfg) {
  std::ostringstream os;
  for (const auto& f : fields()) os << f.key << " = " << f.get(cfg) << '\n';
  return os.str();
}

RunConfig load_run_config(const std::filesystem::path& path) {
  std::ifstream f(path);
  if (!f) throw ConfigError("cannot open config file: " + path.string());
  const std::string text((std::istreambuf_iterator<char>(f)), std::istreambuf_iterator<char>());
  return parse_run_config(text);
}

void save_run_config(const std::filesystem::path& path, const RunConfig& cfg) {
  if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
  std::ofstream f(path, std::ios::trunc);
  if (!f) throw DataError("cannot write config file: " + path.string());
  f << serialize_run_config(cfg);
}

}  // namespace dfnet
