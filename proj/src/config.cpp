#include "terrembed/config.hpp"

#include "terrembed/error.hpp"
#include "terrembed/experiment.hpp"
#include "terrembed/io.hpp"

#include <fmt/core.h>

#include <functional>
#include <map>
#include <set>

namespace terrembed::config {

namespace {

struct Value {
    enum class Type { string, scalar, array } type = Type::scalar;
    std::string text;  // unquoted string content or the literal token
    std::vector<Value> items;
    std::size_t line = 0;
};

class ValueParser {
public:
    ValueParser(std::string_view text, std::string where) : text_(text), where_(std::move(where)) {}

    Value parse_all(std::size_t line) {
        Value v = parse(line);
        skip_space();
        require(pos_ == text_.size(), ErrorKind::configuration,
                fmt::format("{}: trailing characters after value", where_));
        return v;
    }

private:
    void skip_space() {
        while (pos_ < text_.size() && (text_[pos_] == ' ' || text_[pos_] == '\t' || text_[pos_] == '\n' ||
                                        text_[pos_] == '\r')) {
            ++pos_;
        }
    }

    Value parse(std::size_t line) {
        skip_space();
        require(pos_ < text_.size(), ErrorKind::configuration, fmt::format("{}: missing value", where_));
        Value v;
        v.line = line;
        if (text_[pos_] == '"') {
            v.type = Value::Type::string;
            ++pos_;
            while (true) {
                require(pos_ < text_.size(), ErrorKind::configuration, fmt::format("{}: unterminated string", where_));
                const char c = text_[pos_++];
                if (c == '"') {
                    break;
                }
                if (c == '\\') {
                    require(pos_ < text_.size(), ErrorKind::configuration, fmt::format("{}: bad escape", where_));
                    const char e = text_[pos_++];
                    v.text += e == 'n' ? '\n' : e == 't' ? '\t' : e;
                } else {
                    v.text += c;
                }
            }
        } else if (text_[pos_] == '[') {
            v.type = Value::Type::array;
            ++pos_;
            skip_space();
            if (pos_ < text_.size() && text_[pos_] == ']') {
                ++pos_;
                return v;
            }
            while (true) {
                v.items.push_back(parse(line));
                skip_space();
                require(pos_ < text_.size(), ErrorKind::configuration, fmt::format("{}: unterminated array", where_));
                const char c = text_[pos_++];
                if (c == ']') {
                    break;
                }
                require(c == ',', ErrorKind::configuration, fmt::format("{}: expected ',' or ']' in array", where_));
                skip_space();
                if (pos_ < text_.size() && text_[pos_] == ']') {
                    ++pos_;
                    break;
                }
            }
        } else {
            const auto start = pos_;
            while (pos_ < text_.size() && text_[pos_] != ',' && text_[pos_] != ']' && text_[pos_] != ' ' &&
                   text_[pos_] != '\t' && text_[pos_] != '\n') {
                ++pos_;
            }
            v.text = std::string(text_.substr(start, pos_ - start));
        }
        return v;
    }

    std::string_view text_;
    std::string where_;
    std::size_t pos_ = 0;
};

std::string quote(const std::string& s) {
    std::string out = "\"";
    for (char c : s) {
        if (c == '"' || c == '\\') {
            out += '\\';
        }
        out += c;
    }
    return out + '"';
}

struct Field {
    std::string key;
    std::function<void(const Value&, const std::string&)> set;
    std::function<std::string()> get;
};

const Value& expect(const Value& v, Value::Type type, const std::string& where, const char* what) {
    require(v.type == type, ErrorKind::configuration, fmt::format("{}: expected {}", where, what));
    return v;
}

std::string as_string(const Value& v, const std::string& where) {
    return expect(v, Value::Type::string, where, "a quoted string").text;
}

double as_double(const Value& v, const std::string& where) {
    return io::parse_double(expect(v, Value::Type::scalar, where, "a number").text, where);
}

std::uint64_t as_u64(const Value& v, const std::string& where) {
    const auto n = io::parse_int(expect(v, Value::Type::scalar, where, "an integer").text, where);
    require(n >= 0, ErrorKind::configuration, fmt::format("{}: must be non-negative", where));
    return static_cast<std::uint64_t>(n);
}

template <typename T, typename F>
std::vector<T> as_list(const Value& v, const std::string& where, F convert) {
    expect(v, Value::Type::array, where, "an array");
    std::vector<T> out;
    for (const auto& item : v.items) {
        out.push_back(static_cast<T>(convert(item, where)));
    }
    return out;
}

template <typename T>
std::string join(const std::vector<T>& items, const std::function<std::string(const T&)>& fmt_item) {
    std::string out = "[";
    for (std::size_t i = 0; i < items.size(); ++i) {
        out += (i == 0 ? "" : ", ") + fmt_item(items[i]);
    }
    return out + "]";
}

template <typename T>
Field integer(std::string key, T& target) {
    return {std::move(key), [&target](const Value& v, const std::string& w) { target = static_cast<T>(as_u64(v, w)); },
            [&target] { return std::to_string(target); }};
}

Field real(std::string key, double& target) {
    return {std::move(key), [&target](const Value& v, const std::string& w) { target = as_double(v, w); },
            [&target] { return io::format_double(target); }};
}

Field text(std::string key, std::string& target) {
    return {std::move(key), [&target](const Value& v, const std::string& w) { target = as_string(v, w); },
            [&target] { return quote(target); }};
}

Field text_list(std::string key, std::vector<std::string>& target) {
    return {std::move(key),
            [&target](const Value& v, const std::string& w) { target = as_list<std::string>(v, w, as_string); },
            [&target] { return join<std::string>(target, quote); }};
}

Field size_list(std::string key, std::vector<std::size_t>& target) {
    return {std::move(key),
            [&target](const Value& v, const std::string& w) { target = as_list<std::size_t>(v, w, as_u64); },
            [&target] {
                return join<std::size_t>(target, [](const std::size_t& x) { return std::to_string(x); });
            }};
}

Field range(std::string key, augment::ValueRange& target) {
    return {std::move(key),
            [&target](const Value& v, const std::string& w) {
                const auto pair = as_list<double>(v, w, as_double);
                require(pair.size() == 2, ErrorKind::configuration, fmt::format("{}: expected [min, max]", w));
                target = {pair[0], pair[1]};
            },
            [&target] { return fmt::format("[{}, {}]", io::format_double(target.min), io::format_double(target.max)); }};
}

std::vector<std::pair<std::string, std::vector<Field>>> fields(RunConfig& c) {
    std::vector<std::pair<std::string, std::vector<Field>>> s;
    s.push_back({"run",
                 {integer("threads", c.threads), text("log_level", c.log_level)}});
    s.push_back({"scene",
                 {integer("seed", c.scene.seed), integer("areas_x", c.scene.areas_x), integer("areas_y", c.scene.areas_y),
                  integer("area_side", c.scene.area_side), real("cell_size", c.scene.cell_size),
                  real("origin_x", c.scene.origin_x), real("origin_y", c.scene.origin_y),
                  real("noise_sd", c.scene.noise_sd), integer("group_block", c.scene.group_block),
                  real("density_jitter", c.scene.density_jitter), real("base_elevation", c.scene.base_elevation)}});
    s.push_back({"tiles",
                 {integer("side", c.tile_side), integer("input_side", c.input_side),
                  Field{"nodata_policy",
                        [&c](const Value& v, const std::string& w) {
                            c.nodata_policy = raster::parse_nodata_policy(as_string(v, w));
                        },
                        [&c] {
                            return quote(c.nodata_policy == raster::NodataPolicy::impute_zero ? "impute-zero"
                                                                                              : "drop-tile");
                        }}}});
    s.push_back({"augment",
                 {range("zoom_scale", c.augment.zoom_scale), real("horizontal_flip_prob", c.augment.horizontal_flip_prob),
                  real("vertical_flip_prob", c.augment.vertical_flip_prob), range("gain", c.augment.gain),
                  range("offset", c.augment.offset), range("gamma", c.augment.gamma),
                  range("blur_sigma", c.augment.blur_sigma), real("blur_prob", c.augment.blur_prob)}});
    s.push_back({"encoder",
                 {integer("seed", c.encoder_seed), integer("random_seed", c.random_encoder_seed),
                  Field{"channels",
                        [&c](const Value& v, const std::string& w) {
                            const auto channels = as_list<std::uint32_t>(v, w, as_u64);
                            const auto kernel = c.encoder.stages.empty() ? 3u : c.encoder.stages.front().kernel;
                            const auto stride = c.encoder.stages.empty() ? 2u : c.encoder.stages.front().stride;
                            c.encoder.stages.clear();
                            for (auto ch : channels) {
                                c.encoder.stages.push_back({ch, kernel, stride});
                            }
                        },
                        [&c] {
                            std::vector<std::size_t> ch;
                            for (const auto& st : c.encoder.stages) {
                                ch.push_back(st.out_channels);
                            }
                            return join<std::size_t>(ch, [](const std::size_t& x) { return std::to_string(x); });
                        }},
                  Field{"kernel",
                        [&c](const Value& v, const std::string& w) {
                            for (auto& st : c.encoder.stages) {
                                st.kernel = static_cast<std::uint32_t>(as_u64(v, w));
                            }
                        },
                        [&c] { return std::to_string(c.encoder.stages.empty() ? 3u : c.encoder.stages.front().kernel); }},
                  Field{"stride",
                        [&c](const Value& v, const std::string& w) {
                            for (auto& st : c.encoder.stages) {
                                st.stride = static_cast<std::uint32_t>(as_u64(v, w));
                            }
                        },
                        [&c] { return std::to_string(c.encoder.stages.empty() ? 2u : c.encoder.stages.front().stride); }},
                  integer("head_width", c.encoder.head_width), integer("projection_dim", c.encoder.projection_dim)}});
    s.push_back({"contrastive",
                 {integer("seed", c.contrastive.seed), real("temperature", c.contrastive.temperature),
                  integer("batch_pairs", c.contrastive.batch_pairs), integer("epochs", c.contrastive.epochs),
                  real("learning_rate", c.contrastive.learning_rate)}});
    s.push_back({"embedding",
                 {text_list("sources", c.sources), size_list("sizes", c.sizes),
                  real("variance_target", c.variance_target), integer("seed", c.kmeans_seed),
                  integer("restarts", c.kmeans.restarts), integer("max_iterations", c.kmeans.max_iterations),
                  real("shift_tolerance", c.kmeans.shift_tolerance), text("external_features", c.external_features)}});
    s.push_back({"aggregate", {text_list("poolings", c.poolings)}});
    s.push_back({"experiment",
                 {text_list("domains", c.domains), text_list("subsets", c.subsets), text_list("models", c.models),
                  text("test_group", c.test_group), text("val_group", c.val_group), integer("split_seed", c.split_seed),
                  integer("seed", c.model_seed), integer("lasso_alphas", c.lasso_alphas),
                  integer("lasso_folds", c.lasso_folds), integer("gbm_trials", c.gbm_trials),
                  integer("gbm_rounds", c.gbm_rounds), integer("gbm_patience", c.gbm_patience)}});
    s.push_back({"interpret",
                 {integer("seed", c.interpret_seed), integer("representatives", c.representatives),
                  text("source", c.interpret_source)}});
    return s;
}

Field* find_field(std::vector<std::pair<std::string, std::vector<Field>>>& table, const std::string& section,
                  const std::string& key) {
    for (auto& [name, list] : table) {
        if (name != section) {
            continue;
        }
        for (auto& f : list) {
            if (f.key == key) {
                return &f;
            }
        }
    }
    return nullptr;
}

bool has_section(const std::vector<std::pair<std::string, std::vector<Field>>>& table, const std::string& section) {
    for (const auto& [name, list] : table) {
        if (name == section) {
            return true;
        }
    }
    return false;
}

std::string strip_comment(const std::string& line) {
    bool in_string = false;
    for (std::size_t i = 0; i < line.size(); ++i) {
        if (line[i] == '"' && (i == 0 || line[i - 1] != '\\')) {
            in_string = !in_string;
        } else if (line[i] == '#' && !in_string) {
            return line.substr(0, i);
        }
    }
    return line;
}

int bracket_balance(const std::string& s) {
    int depth = 0;
    bool in_string = false;
    for (std::size_t i = 0; i < s.size(); ++i) {
        if (s[i] == '"' && (i == 0 || s[i - 1] != '\\')) {
            in_string = !in_string;
        } else if (!in_string) {
            depth += s[i] == '[' ? 1 : s[i] == ']' ? -1 : 0;
        }
    }
    return depth;
}

void finalize(RunConfig& c) {
    c.scene.tile_side = c.tile_side;
    c.encoder.input_side = c.input_side;
}

}  // namespace

void RunConfig::validate() const {
    scene.validate();
    augment.validate();
    encoder.validate();
    contrastive.validate();
    require(encoder.input_side == input_side, ErrorKind::configuration, "encoder input side must equal tiles.input_side");
    require(input_side <= tile_side, ErrorKind::configuration, "tiles.input_side cannot exceed tiles.side");
    require(!sources.empty() && !sizes.empty() && !poolings.empty(), ErrorKind::configuration,
            "embedding sources, sizes and poolings must be non-empty");
    require(!domains.empty() && !subsets.empty() && !models.empty(), ErrorKind::configuration,
            "experiment domains, subsets and models must be non-empty");
    for (auto k : sizes) {
        require(k >= 2, ErrorKind::configuration, fmt::format("embedding size {} is below 2", k));
    }
    for (const auto& label : sources) {
        const auto [source, layer] = experiment::split_source_label(label);
        if (source == "external") {
            require(!external_features.empty(), ErrorKind::configuration,
                    "source 'external' needs embedding.external_features");
        } else {
            encoder::parse_layer_tap(layer);
        }
    }
    for (const auto& p : poolings) {
        aggregate::parse_pool_method(p);
    }
    for (const auto& s : subsets) {
        experiment::parse_subset(s);
    }
    for (const auto& m : models) {
        experiment::parse_model_kind(m);
    }
    require(variance_target > 0.0 && variance_target <= 1.0, ErrorKind::configuration,
            "embedding.variance_target must lie in (0, 1]");
    require(representatives >= 1, ErrorKind::configuration, "interpret.representatives must be positive");
    require(log_level == "debug" || log_level == "info" || log_level == "warn" || log_level == "error",
            ErrorKind::configuration, fmt::format("unknown log level '{}'", log_level));
}

RunConfig parse_config(const std::string& text, const std::string& context) {
    RunConfig c;
    auto table = fields(c);
    std::string section;
    std::set<std::string> seen;
    const auto lines = io::split(text, '\n');
    for (std::size_t i = 0; i < lines.size(); ++i) {
        const std::size_t line_no = i + 1;
        std::string line{io::trim(strip_comment(std::string(lines[i])))};
        if (line.empty()) {
            continue;
        }
        const auto where = fmt::format("{} line {}", context, line_no);
        if (line.front() == '[') {
            require(line.back() == ']', ErrorKind::configuration, fmt::format("{}: malformed section header", where));
            section = std::string(io::trim(std::string_view(line).substr(1, line.size() - 2)));
            require(has_section(table, section), ErrorKind::configuration,
                    fmt::format("{}: unknown section [{}]", where, section));
            continue;
        }
        const auto eq = line.find('=');
        require(eq != std::string::npos, ErrorKind::configuration, fmt::format("{}: expected key = value", where));
        const std::string key{io::trim(std::string_view(line).substr(0, eq))};
        std::string raw{io::trim(std::string_view(line).substr(eq + 1))};
        while (bracket_balance(raw) > 0 && i + 1 < lines.size()) {
            raw += ' ' + std::string(io::trim(strip_comment(std::string(lines[++i]))));
        }
        require(!section.empty(), ErrorKind::configuration, fmt::format("{}: key '{}' outside any section", where, key));
        const auto full = section + "." + key;
        Field* f = find_field(table, section, key);
        require(f != nullptr, ErrorKind::configuration, fmt::format("{}: unknown key '{}'", where, full));
        require(seen.insert(full).second, ErrorKind::configuration, fmt::format("{}: duplicate key '{}'", where, full));
        f->set(ValueParser(raw, where).parse_all(line_no), fmt::format("{} ({})", where, full));
    }
    finalize(c);
    c.validate();
    return c;
}

RunConfig load_config(const std::filesystem::path& path) { return parse_config(io::read_text(path), path.string()); }

void apply_override(RunConfig& config, const std::string& assignment) {
    const auto eq = assignment.find('=');
    require(eq != std::string::npos, ErrorKind::configuration,
            fmt::format("override '{}' must look like section.key=value", assignment));
    const std::string name{io::trim(std::string_view(assignment).substr(0, eq))};
    const auto dot = name.find('.');
    require(dot != std::string::npos, ErrorKind::configuration,
            fmt::format("override '{}' must name section.key", assignment));
    auto table = fields(config);
    Field* f = find_field(table, name.substr(0, dot), name.substr(dot + 1));
    require(f != nullptr, ErrorKind::configuration, fmt::format("unknown config key '{}'", name));
    const auto where = fmt::format("override {}", name);
    f->set(ValueParser(assignment.substr(eq + 1), where).parse_all(0), where);
    finalize(config);
}

std::string format_config(const RunConfig& config) {
    RunConfig copy = config;
    std::string out;
    for (const auto& [section, list] : fields(copy)) {
        out += fmt::format("{}[{}]\n", out.empty() ? "" : "\n", section);
        for (const auto& f : list) {
            out += fmt::format("{} = {}\n", f.key, f.get());
        }
    }
    return out;
}

std::string config_hash(const RunConfig& config) { return io::sha256_hex(format_config(config)); }

std::vector<std::pair<std::string, std::uint64_t>> seeds(const RunConfig& c) {
    return {{"scene", c.scene.seed},         {"encoder", c.encoder_seed},   {"random_encoder", c.random_encoder_seed},
            {"contrastive", c.contrastive.seed}, {"kmeans", c.kmeans_seed}, {"split", c.split_seed},
            {"model", c.model_seed},         {"interpret", c.interpret_seed}};
}

}  // namespace terrembed::config
