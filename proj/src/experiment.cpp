#include "terrembed/experiment.hpp"

#include "terrembed/error.hpp"
#include "terrembed/io.hpp"
#include "terrembed/log.hpp"
#include "terrembed/rng.hpp"

#include <fmt/core.h>
#include <nlohmann/json.hpp>

#include <algorithm>
#include <cmath>
#include <set>

namespace terrembed::experiment {

namespace {

std::uint64_t fnv1a(std::string_view text) {
    std::uint64_t h = 0xcbf29ce484222325ULL;
    for (char c : text) {
        h ^= static_cast<unsigned char>(c);
        h *= 0x100000001b3ULL;
    }
    return h;
}

}  // namespace

std::optional<std::string> SplitPlan::split_of(const std::string& area_id) const {
    for (const auto* part : {&train, &val, &test}) {
        if (std::binary_search(part->begin(), part->end(), area_id)) {
            return part == &train ? "train" : part == &val ? "val" : "test";
        }
    }
    return std::nullopt;
}

std::size_t holdout_quota(std::size_t n_areas) {
    return static_cast<std::size_t>(std::llround(kHoldoutFraction * static_cast<double>(n_areas)));
}

double random_fill_share(double group_share) {
    require(group_share >= 0.0 && group_share <= 1.0, ErrorKind::configuration,
            "group share must lie in [0, 1]");
    return 1.0 - group_share;
}

SplitPlan build_split(const std::vector<raster::AreaUnit>& areas, const std::string& test_group,
                      const std::string& val_group, std::uint64_t seed) {
    require(test_group != val_group, ErrorKind::configuration,
            fmt::format("split: test and validation groups must differ (both '{}')", test_group));
    std::vector<std::string> ids;
    std::vector<std::string> test_members;
    std::vector<std::string> val_members;
    std::vector<std::string> pool;
    for (const auto& a : areas) {
        ids.push_back(a.id);
        if (a.group_id == test_group) {
            test_members.push_back(a.id);
        } else if (a.group_id == val_group) {
            val_members.push_back(a.id);
        } else {
            pool.push_back(a.id);
        }
    }
    std::sort(ids.begin(), ids.end());
    require(std::adjacent_find(ids.begin(), ids.end()) == ids.end(), ErrorKind::validation,
            "split: duplicate area ids");
    require(!test_members.empty(), ErrorKind::configuration, fmt::format("split: unknown test group '{}'", test_group));
    require(!val_members.empty(), ErrorKind::configuration, fmt::format("split: unknown validation group '{}'", val_group));
    const std::size_t quota = holdout_quota(ids.size());
    for (const auto& [name, members] : {std::pair{&test_group, &test_members}, std::pair{&val_group, &val_members}}) {
        require(members->size() <= quota, ErrorKind::configuration,
                fmt::format("split: group '{}' has {} areas, more than the hold-out quota of {}", *name,
                            members->size(), quota));
    }
    std::sort(pool.begin(), pool.end());
    const std::size_t test_fill = quota - test_members.size();
    const std::size_t val_fill = quota - val_members.size();
    require(pool.size() >= test_fill + val_fill, ErrorKind::configuration,
            "split: not enough ungrouped areas to fill the hold-out sets");
    Rng rng(derive_seed(seed, 0x5b117));
    rng.shuffle(pool);

    SplitPlan plan;
    plan.seed = seed;
    plan.test_group = test_group;
    plan.val_group = val_group;
    plan.test_group_areas = test_members.size();
    plan.val_group_areas = val_members.size();
    plan.test = std::move(test_members);
    plan.val = std::move(val_members);
    plan.test.insert(plan.test.end(), pool.begin(), pool.begin() + static_cast<std::ptrdiff_t>(test_fill));
    plan.val.insert(plan.val.end(), pool.begin() + static_cast<std::ptrdiff_t>(test_fill),
                    pool.begin() + static_cast<std::ptrdiff_t>(test_fill + val_fill));
    plan.train.assign(pool.begin() + static_cast<std::ptrdiff_t>(test_fill + val_fill), pool.end());
    for (auto* part : {&plan.train, &plan.val, &plan.test}) {
        std::sort(part->begin(), part->end());
    }
    return plan;
}

std::string format_split_json(const SplitPlan& plan) {
    nlohmann::ordered_json j;
    j["seed"] = plan.seed;
    j["test_group"] = plan.test_group;
    j["val_group"] = plan.val_group;
    j["test_group_areas"] = plan.test_group_areas;
    j["val_group_areas"] = plan.val_group_areas;
    j["train"] = plan.train;
    j["val"] = plan.val;
    j["test"] = plan.test;
    return j.dump(2) + "\n";
}

SplitPlan parse_split_json(const std::string& text) {
    try {
        const auto j = nlohmann::json::parse(text);
        SplitPlan plan;
        plan.seed = j.at("seed").get<std::uint64_t>();
        plan.test_group = j.at("test_group").get<std::string>();
        plan.val_group = j.at("val_group").get<std::string>();
        plan.test_group_areas = j.at("test_group_areas").get<std::size_t>();
        plan.val_group_areas = j.at("val_group_areas").get<std::size_t>();
        plan.train = j.at("train").get<std::vector<std::string>>();
        plan.val = j.at("val").get<std::vector<std::string>>();
        plan.test = j.at("test").get<std::vector<std::string>>();
        for (auto* part : {&plan.train, &plan.val, &plan.test}) {
            std::sort(part->begin(), part->end());
        }
        return plan;
    } catch (const nlohmann::json::exception& e) {
        fail(ErrorKind::parse, fmt::format("split plan: {}", e.what()));
    }
}

std::size_t IndexTable::column(const std::string& name) const {
    const auto it = std::find(names.begin(), names.end(), name);
    require(it != names.end(), ErrorKind::schema, fmt::format("index table has no column '{}'", name));
    return static_cast<std::size_t>(it - names.begin());
}

IndexTable parse_indices_csv(const std::string& text, const std::string& context) {
    const auto csv = io::parse_csv(text, context);
    require(!csv.header.empty() && csv.header[0] == "area_id", ErrorKind::schema,
            fmt::format("{}: first column must be area_id", context));
    IndexTable table;
    table.names.assign(csv.header.begin() + 1, csv.header.end());
    for (std::size_t i = 0; i < csv.rows.size(); ++i) {
        const auto& row = csv.rows[i];
        const auto where = fmt::format("{} line {}", context, csv.line_numbers[i]);
        require(row.size() == csv.header.size(), ErrorKind::parse,
                fmt::format("{}: expected {} cells, found {}", where, csv.header.size(), row.size()));
        std::vector<double> values;
        for (std::size_t c = 1; c < row.size(); ++c) {
            values.push_back(io::parse_double(row[c], where));
        }
        require(table.values.emplace(row[0], std::move(values)).second, ErrorKind::parse,
                fmt::format("{}: duplicate area '{}'", where, row[0]));
    }
    return table;
}

std::string format_indices_csv(const IndexTable& table) {
    std::string out = "area_id";
    for (const auto& n : table.names) {
        out += ',' + n;
    }
    out += '\n';
    for (const auto& [id, values] : table.values) {
        out += id;
        for (double v : values) {
            out += ',' + io::format_double(v);
        }
        out += '\n';
    }
    return out;
}

std::string_view to_string(Subset s) {
    switch (s) {
        case Subset::demographic: return "demographic";
        case Subset::embedding: return "embedding";
        case Subset::combined: return "combined";
    }
    return "?";
}

std::string_view to_string(ModelKind m) { return m == ModelKind::lasso ? "lasso" : "gbm"; }

Subset parse_subset(std::string_view text) {
    for (auto s : {Subset::demographic, Subset::embedding, Subset::combined}) {
        if (text == to_string(s)) {
            return s;
        }
    }
    fail(ErrorKind::configuration, fmt::format("unknown feature subset '{}'", text));
}

ModelKind parse_model_kind(std::string_view text) {
    for (auto m : {ModelKind::lasso, ModelKind::gbm}) {
        if (text == to_string(m)) {
            return m;
        }
    }
    fail(ErrorKind::configuration, fmt::format("unknown model '{}' (expected lasso or gbm)", text));
}

std::string feature_key(const std::string& source, const std::string& layer, std::size_t k,
                        aggregate::PoolMethod pooling) {
    return fmt::format("{}_K{}_{}", source_label(source, layer), k, aggregate::to_string(pooling));
}

std::string ExperimentSpec::feature_key() const { return experiment::feature_key(source, layer, k, pooling); }

std::pair<std::string, std::string> split_source_label(const std::string& label) {
    for (const std::string base : {"simclr", "random-encoder"}) {
        if (label.rfind(base + "-", 0) == 0) {
            return {base, label.substr(base.size() + 1)};
        }
    }
    require(label == "external", ErrorKind::configuration,
            fmt::format("unknown embedding source '{}' (expected simclr-<tap>, random-encoder-<tap> or external)", label));
    return {label, ""};
}

std::string source_label(const std::string& source, const std::string& layer) {
    return layer.empty() ? source : source + "-" + layer;
}

Dataset assemble_features(const ExperimentSpec& spec, const IndexTable& indices,
                          const std::vector<aggregate::PooledFeatures>* pooled, const SplitPlan& plan) {
    const std::size_t target = indices.column(spec.domain);
    std::map<std::string, const aggregate::PooledFeatures*> by_area;
    std::size_t k = 0;
    if (spec.subset != Subset::demographic) {
        require(pooled != nullptr, ErrorKind::missing_input,
                fmt::format("no pooled features for {}", spec.feature_key()));
        for (const auto& p : *pooled) {
            if (!p.missing()) {
                by_area.emplace(p.area_id, &p);
                k = p.vector.size();
            }
        }
    }
    const std::size_t demo_width = spec.subset == Subset::embedding ? 0 : indices.names.size() - 1;
    const std::size_t width = demo_width + (spec.subset == Subset::demographic ? 0 : k);

    Dataset data;
    auto fill = [&](const std::vector<std::string>& ids, SplitData& out) {
        std::vector<std::string> kept;
        for (const auto& id : ids) {
            require(indices.values.count(id) == 1, ErrorKind::schema, fmt::format("area '{}' has no index values", id));
            if (spec.subset != Subset::demographic && by_area.count(id) == 0) {
                data.dropped.push_back(id);
                continue;
            }
            kept.push_back(id);
        }
        out.area_ids = kept;
        out.x.resize(static_cast<Eigen::Index>(kept.size()), static_cast<Eigen::Index>(width));
        out.y_raw.resize(static_cast<Eigen::Index>(kept.size()));
        for (std::size_t r = 0; r < kept.size(); ++r) {
            const auto& values = indices.values.at(kept[r]);
            const auto row = static_cast<Eigen::Index>(r);
            out.y_raw(row) = values[target];
            Eigen::Index c = 0;
            if (demo_width > 0) {
                for (std::size_t j = 0; j < values.size(); ++j) {
                    if (j != target) {
                        out.x(row, c++) = values[j];
                    }
                }
            }
            if (spec.subset != Subset::demographic) {
                const auto& v = by_area.at(kept[r])->vector;
                require(v.size() == k, ErrorKind::dimension, "pooled features: mixed K");
                for (double d : v) {
                    out.x(row, c++) = d;
                }
            }
        }
    };
    fill(plan.train, data.train);
    fill(plan.val, data.val);
    fill(plan.test, data.test);
    if (!data.dropped.empty()) {
        log::warn("{}: {} areas without pooled features were excluded", spec.feature_key(), data.dropped.size());
    }
    require(data.train.x.rows() >= 2, ErrorKind::configuration, "assemble: fewer than two training areas");
    data.scaler = regress::TargetScaler::fit(data.train.y_raw);
    for (auto* part : {&data.train, &data.val, &data.test}) {
        part->y = data.scaler.apply(part->y_raw);
    }
    return data;
}

double improvement_pct(double demographic_rmse, double subset_rmse) {
    require(demographic_rmse > 0.0, ErrorKind::degenerate, "improvement: demographic RMSE must be positive");
    return 100.0 * (demographic_rmse - subset_rmse) / demographic_rmse;
}

long ResultRow::display_improvement() const { return std::lround(improvement_pct); }

FitOutcome fit_and_score(const Dataset& data, ModelKind model, const ModelSettings& settings, std::uint64_t seed) {
    require(data.val.x.rows() > 0 && data.test.x.rows() > 0, ErrorKind::configuration,
            "fit: validation and test sets must be non-empty");
    FitOutcome out;
    Eigen::VectorXd val_pred;
    Eigen::VectorXd test_pred;
    if (model == ModelKind::lasso) {
        auto options = settings.lasso;
        options.seed = derive_seed(seed, 1);
        const auto fitted = regress::fit_lasso(data.train.x, data.train.y, options);
        val_pred = fitted.predict(data.val.x);
        test_pred = fitted.predict(data.test.x);
        out.model_json = regress::lasso_to_json(fitted);
    } else {
        auto budget = settings.gbm;
        budget.seed = derive_seed(seed, 2);
        const auto search = regress::fit_gbm(data.train.x, data.train.y, data.val.x, data.val.y, budget);
        val_pred = search.model.predict(data.val.x);
        test_pred = search.model.predict(data.test.x);
        out.model_json = regress::gbm_to_json(search.model);
    }
    out.val_rmse = regress::rmse(val_pred, data.val.y);
    out.test_rmse = regress::rmse(test_pred, data.test.y);
    for (const auto& [name, part, pred] : {std::tuple{"val", &data.val, &val_pred}, std::tuple{"test", &data.test, &test_pred}}) {
        for (std::size_t i = 0; i < part->area_ids.size(); ++i) {
            const auto r = static_cast<Eigen::Index>(i);
            out.predictions.push_back({name, part->area_ids[i], part->y(r), (*pred)(r)});
        }
    }
    return out;
}

std::vector<ExperimentSpec> expand_grid(const std::vector<std::string>& domains, const std::vector<Subset>& subsets,
                                        const std::vector<std::string>& source_labels,
                                        const std::vector<std::size_t>& sizes,
                                        const std::vector<aggregate::PoolMethod>& poolings,
                                        const std::vector<ModelKind>& models, std::uint64_t seed) {
    std::vector<ExperimentSpec> specs;
    for (const auto& d : domains) {
        for (auto s : subsets) {
            for (const auto& label : source_labels) {
                const auto [source, layer] = split_source_label(label);
                for (auto k : sizes) {
                    for (auto p : poolings) {
                        for (auto m : models) {
                            specs.push_back({d, s, source, layer, k, p, m, seed});
                        }
                    }
                }
            }
        }
    }
    return specs;
}

std::vector<ResultRow> run_grid(const std::vector<ExperimentSpec>& specs, const IndexTable& indices,
                                const PooledTables& pooled, const SplitPlan& plan, const ModelSettings& settings) {
    std::map<std::pair<std::string, ModelKind>, FitOutcome> demographic;
    auto cell_seed = [](const ExperimentSpec& s) {
        return derive_seed(s.seed, fnv1a(s.domain), static_cast<std::uint64_t>(s.model));
    };
    auto baseline = [&](const ExperimentSpec& s) -> const FitOutcome& {
        const auto key = std::pair{s.domain, s.model};
        auto it = demographic.find(key);
        if (it == demographic.end()) {
            ExperimentSpec demo = s;
            demo.subset = Subset::demographic;
            const auto data = assemble_features(demo, indices, nullptr, plan);
            it = demographic.emplace(key, fit_and_score(data, s.model, settings, cell_seed(s))).first;
        }
        return it->second;
    };

    std::vector<ResultRow> rows;
    rows.reserve(specs.size());
    for (std::size_t i = 0; i < specs.size(); ++i) {
        const auto& spec = specs[i];
        ResultRow row;
        row.spec = spec;
        try {
            const auto& demo = baseline(spec);
            if (spec.subset == Subset::demographic) {
                row.val_rmse = demo.val_rmse;
                row.test_rmse = demo.test_rmse;
                row.predictions = demo.predictions;
                row.model_json = demo.model_json;
            } else {
                const auto it = pooled.find(spec.feature_key());
                const auto data = assemble_features(spec, indices, it == pooled.end() ? nullptr : &it->second, plan);
                auto fit = fit_and_score(data, spec.model, settings, cell_seed(spec));
                row.val_rmse = fit.val_rmse;
                row.test_rmse = fit.test_rmse;
                row.predictions = std::move(fit.predictions);
                row.model_json = std::move(fit.model_json);
            }
            row.improvement_pct = improvement_pct(demo.test_rmse, row.test_rmse);
        } catch (const std::exception& e) {
            row.failed = true;
            row.error = e.what();
            log::warn("grid cell {} failed: {}", i, e.what());
        }
        log::debug("grid {}/{}: {} {} {} K={} {} {} test_rmse={}", i + 1, specs.size(), spec.domain,
                   to_string(spec.subset), source_label(spec.source, spec.layer), spec.k,
                   aggregate::to_string(spec.pooling), to_string(spec.model), row.test_rmse);
        rows.push_back(std::move(row));
    }
    return rows;
}

namespace {

std::string spec_cells(const ExperimentSpec& s) {
    return fmt::format("{},{},{},{},{},{},{}", s.domain, to_string(s.subset), s.source, s.layer, s.k,
                       aggregate::to_string(s.pooling), to_string(s.model));
}

}  // namespace

std::string format_results_csv(const std::vector<ResultRow>& rows) {
    std::string out = "domain,subset,source,layer,K,pooling,model,val_rmse,test_rmse,improvement_pct\n";
    for (const auto& r : rows) {
        out += spec_cells(r.spec);
        if (r.failed) {
            out += ",,,\n";
        } else {
            out += fmt::format(",{},{},{}\n", io::format_double(r.val_rmse), io::format_double(r.test_rmse),
                               io::format_double(r.improvement_pct));
        }
    }
    return out;
}

std::string format_predictions_csv(const std::vector<ResultRow>& rows) {
    std::string out = "domain,subset,source,layer,K,pooling,model,split,area_id,actual,predicted,error\n";
    for (const auto& r : rows) {
        const auto prefix = spec_cells(r.spec);
        for (const auto& p : r.predictions) {
            out += fmt::format("{},{},{},{},{},{}\n", prefix, p.split, p.area_id, io::format_double(p.actual),
                               io::format_double(p.predicted), io::format_double(p.predicted - p.actual));
        }
    }
    return out;
}

namespace {

double quantile(std::vector<double> v, double q) {
    std::sort(v.begin(), v.end());
    const double pos = q * static_cast<double>(v.size() - 1);
    const auto lo = static_cast<std::size_t>(std::floor(pos));
    const auto hi = std::min(lo + 1, v.size() - 1);
    return v[lo] + (pos - static_cast<double>(lo)) * (v[hi] - v[lo]);
}

std::string escape_xml(const std::string& s) {
    std::string out;
    for (char c : s) {
        switch (c) {
            case '&': out += "&amp;"; break;
            case '<': out += "&lt;"; break;
            case '>': out += "&gt;"; break;
            case '"': out += "&quot;"; break;
            default: out += c;
        }
    }
    return out;
}

}  // namespace

std::string box_plot_svg(const std::string& title, const std::string& axis_label, const std::vector<ChartGroup>& groups) {
    constexpr double kLeft = 70.0;
    constexpr double kTop = 40.0;
    constexpr double kPlotHeight = 300.0;
    constexpr double kSlot = 90.0;
    const double width = kLeft + kSlot * static_cast<double>(std::max<std::size_t>(groups.size(), 1)) + 30.0;
    const double height = kTop + kPlotHeight + 60.0;

    double lo = 0.0;
    double hi = 0.0;
    for (const auto& g : groups) {
        for (double v : g.values) {
            lo = std::min(lo, v);
            hi = std::max(hi, v);
        }
    }
    if (hi - lo < 1e-9) {
        hi = lo + 1.0;
    }
    const double pad = 0.05 * (hi - lo);
    lo -= pad;
    hi += pad;
    auto ypos = [&](double v) { return kTop + kPlotHeight * (hi - v) / (hi - lo); };

    std::string svg = fmt::format(
        "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"{:.0f}\" height=\"{:.0f}\" font-family=\"sans-serif\" "
        "font-size=\"12\">\n<rect width=\"100%\" height=\"100%\" fill=\"white\"/>\n"
        "<text x=\"{:.1f}\" y=\"22\" font-size=\"14\" text-anchor=\"middle\">{}</text>\n",
        width, height, width / 2.0, escape_xml(title));
    svg += fmt::format("<line x1=\"{0:.1f}\" y1=\"{1:.1f}\" x2=\"{0:.1f}\" y2=\"{2:.1f}\" stroke=\"black\"/>\n", kLeft,
                       kTop, kTop + kPlotHeight);
    for (int t = 0; t <= 4; ++t) {
        const double v = lo + (hi - lo) * t / 4.0;
        svg += fmt::format("<text x=\"{:.1f}\" y=\"{:.1f}\" text-anchor=\"end\">{:.1f}</text>\n", kLeft - 6.0,
                           ypos(v) + 4.0, v);
    }
    svg += fmt::format("<line x1=\"{0:.1f}\" y1=\"{2:.1f}\" x2=\"{1:.1f}\" y2=\"{2:.1f}\" stroke=\"#999\" "
                       "stroke-dasharray=\"4 3\"/>\n",
                       kLeft, width - 20.0, ypos(0.0));
    svg += fmt::format("<text transform=\"translate(16 {:.1f}) rotate(-90)\" text-anchor=\"middle\">{}</text>\n",
                       kTop + kPlotHeight / 2.0, escape_xml(axis_label));
    for (std::size_t g = 0; g < groups.size(); ++g) {
        const double cx = kLeft + kSlot * (static_cast<double>(g) + 0.5);
        svg += fmt::format("<text x=\"{:.1f}\" y=\"{:.1f}\" text-anchor=\"middle\">{} (n={})</text>\n", cx,
                           kTop + kPlotHeight + 20.0, escape_xml(groups[g].label), groups[g].values.size());
        if (groups[g].values.empty()) {
            continue;
        }
        const auto& v = groups[g].values;
        const double q1 = quantile(v, 0.25);
        const double q2 = quantile(v, 0.5);
        const double q3 = quantile(v, 0.75);
        const double mn = *std::min_element(v.begin(), v.end());
        const double mx = *std::max_element(v.begin(), v.end());
        svg += fmt::format("<line x1=\"{0:.1f}\" y1=\"{1:.1f}\" x2=\"{0:.1f}\" y2=\"{2:.1f}\" stroke=\"black\"/>\n", cx,
                           ypos(mx), ypos(mn));
        svg += fmt::format("<rect x=\"{:.1f}\" y=\"{:.1f}\" width=\"40\" height=\"{:.1f}\" fill=\"#9ecae1\" "
                           "stroke=\"black\"/>\n",
                           cx - 20.0, ypos(q3), std::max(ypos(q1) - ypos(q3), 0.5));
        svg += fmt::format("<line x1=\"{0:.1f}\" y1=\"{2:.1f}\" x2=\"{1:.1f}\" y2=\"{2:.1f}\" stroke=\"black\" "
                           "stroke-width=\"2\"/>\n",
                           cx - 20.0, cx + 20.0, ypos(q2));
    }
    svg += "</svg>\n";
    return svg;
}

void write_reports(const std::vector<ResultRow>& rows, const std::filesystem::path& dir) {
    std::filesystem::create_directories(dir);
    io::write_text_atomic(dir / "results.csv", format_results_csv(rows));
    io::write_text_atomic(dir / "predictions.csv", format_predictions_csv(rows));

    using Getter = std::string (*)(const ExperimentSpec&);
    const std::pair<const char*, Getter> factors[] = {
        {"pooling", [](const ExperimentSpec& s) { return std::string(aggregate::to_string(s.pooling)); }},
        {"model", [](const ExperimentSpec& s) { return std::string(to_string(s.model)); }},
        {"source", [](const ExperimentSpec& s) { return s.source; }},
        {"size", [](const ExperimentSpec& s) { return fmt::format("K={}", s.k); }},
        {"layer", [](const ExperimentSpec& s) { return s.layer.empty() ? std::string("-") : s.layer; }},
    };
    for (const auto& [factor, get] : factors) {
        std::vector<ChartGroup> groups;
        for (const auto& r : rows) {
            if (r.failed || r.spec.subset == Subset::demographic) {
                continue;
            }
            const auto label = get(r.spec);
            auto it = std::find_if(groups.begin(), groups.end(), [&](const ChartGroup& g) { return g.label == label; });
            if (it == groups.end()) {
                groups.push_back({label, {}});
                it = groups.end() - 1;
            }
            it->values.push_back(r.improvement_pct);
        }
        io::write_text_atomic(dir / fmt::format("improvement_by_{}.svg", factor),
                              box_plot_svg(fmt::format("RMSE improvement by {}", factor), "improvement vs demographic (%)",
                                           groups));
    }
}

}  // namespace terrembed::experiment
