#include "shiftfuse/cli.hpp"

#include <algorithm>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <set>
#include <sstream>
#include <vector>

#include "CLI11.hpp"
#include "json.hpp"

#include "shiftfuse/data.hpp"
#include "shiftfuse/diagnostics.hpp"
#include "shiftfuse/estimators.hpp"
#include "shiftfuse/nuisance.hpp"
#include "shiftfuse/shift.hpp"
#include "shiftfuse/sim.hpp"
#include "shiftfuse/version.hpp"

namespace fs = std::filesystem;
using nlohmann::json;

namespace shiftfuse {

namespace {

std::string read_file(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw IoError("cannot open '" + path + "'");
    std::ostringstream ss;
    ss << in.rdbuf();
    return ss.str();
}

std::string fnv1a_hex(const std::string& bytes) {
    std::uint64_t h = 0xcbf29ce484222325ULL;
    for (unsigned char c : bytes) {
        h ^= c;
        h *= 0x100000001b3ULL;
    }
    char buf[17];
    std::snprintf(buf, sizeof(buf), "%016llx", static_cast<unsigned long long>(h));
    return buf;
}

// Tracks files created by one command so a failure leaves no partial
// output behind.
class OutputTracker {
public:
    explicit OutputTracker(const std::string& dir) : dir_(dir) {
        if (!fs::exists(dir_)) {
            fs::create_directories(dir_);
            created_dir_ = true;
        }
    }

    std::ofstream create(const std::string& name) {
        const fs::path p = fs::path(dir_) / name;
        std::ofstream out(p);
        if (!out) throw IoError("cannot open '" + p.string() + "' for writing");
        files_.push_back(p);
        return out;
    }

    fs::path path(const std::string& name) const { return fs::path(dir_) / name; }

    void rollback() noexcept {
        std::error_code ec;
        for (const auto& f : files_) fs::remove(f, ec);
        if (created_dir_) fs::remove(dir_, ec);  // only removes if empty
    }

private:
    fs::path dir_;
    std::vector<fs::path> files_;
    bool created_dir_ = false;
};

int report_error(const Error& e) {
    json j;
    j["error"] = {{"kind", e.kind()}, {"message", e.what()}};
    std::cerr << j.dump() << std::endl;
    return 1;
}

int report_error(const std::exception& e) {
    json j;
    j["error"] = {{"kind", "internal"}, {"message", e.what()}};
    std::cerr << j.dump() << std::endl;
    return 1;
}

struct LoadedConfig {
    json doc;
    std::string hash;
    std::uint64_t seed = 0;
    std::string out_dir = ".";
};

LoadedConfig load_config(const std::string& path, const CliOverrides& ov) {
    LoadedConfig cfg;
    const std::string text = read_file(path);
    cfg.hash = fnv1a_hex(text);
    try {
        cfg.doc = json::parse(text);
    } catch (const json::exception& e) {
        throw ConfigError("config '" + path + "': " + e.what());
    }
    cfg.seed = cfg.doc.value("seed", std::uint64_t{0});
    cfg.out_dir = cfg.doc.value("out", std::string("."));
    if (ov.seed) cfg.seed = *ov.seed;
    if (ov.out_dir) cfg.out_dir = *ov.out_dir;
    return cfg;
}

std::string header_comment(const LoadedConfig& cfg) {
    std::ostringstream ss;
    ss << kToolName << ' ' << kToolVersion << " config_hash=" << cfg.hash
       << " seed=" << cfg.seed;
    return ss.str();
}

CsvSchema schema_from_json(const json& j) {
    CsvSchema schema;
    try {
        schema.source_column = j.at("source").get<std::string>();
        schema.treatment_column = j.at("treatment").get<std::string>();
        schema.covariate_columns = j.at("covariates").get<std::vector<std::string>>();
        if (j.contains("outcome_difference")) {
            const auto pair = j.at("outcome_difference").get<std::vector<std::string>>();
            if (pair.size() != 2)
                throw ConfigError("schema.outcome_difference must be [minuend, subtrahend]");
            schema.outcome_difference = {pair[0], pair[1]};
        } else {
            schema.outcome_column = j.at("outcome").get<std::string>();
        }
    } catch (const json::exception& e) {
        throw ConfigError(std::string("schema: ") + e.what());
    }
    schema.validate();
    return schema;
}

FeatureBasis basis_from_json(const json& arr, const char* which) {
    FeatureBasis basis;
    try {
        for (const auto& item : arr) basis.terms.push_back(term_from_string(item.get<std::string>()));
    } catch (const json::exception& e) {
        throw ConfigError(std::string("bases.") + which + ": " + e.what());
    }
    return basis;
}

DGPSpec dgp_from_json(const json& j) {
    DGPSpec dgp;  // defaults are the synthetic-experiment values
    auto pair = [&](const char* key, std::array<double, 2>& dst) {
        if (j.contains(key)) {
            const auto v = j.at(key).get<std::vector<double>>();
            if (v.size() != 2) throw ConfigError(std::string("dgp.") + key + " must be [mean, sd]");
            dst = {v[0], v[1]};
        }
    };
    auto triple = [&](const char* key, std::array<double, 3>& dst) {
        if (j.contains(key)) {
            const auto v = j.at(key).get<std::vector<double>>();
            if (v.size() != 3)
                throw ConfigError(std::string("dgp.") + key + " must be [c0, c1, c2]");
            dst = {v[0], v[1], v[2]};
        }
    };
    pair("trial_x", dgp.trial_x);
    pair("ec_x", dgp.ec_x);
    triple("mu1_coef", dgp.mu1_coef);
    triple("mu0_coef", dgp.mu0_coef);
    dgp.outcome_sd = j.value("outcome_sd", dgp.outcome_sd);
    dgp.ec_offset = j.value("ec_offset", dgp.ec_offset);
    dgp.n = j.value("n", dgp.n);
    dgp.N = j.value("N", dgp.N);
    dgp.pi = j.value("pi", dgp.pi);
    dgp.validate();
    return dgp;
}

json estimate_to_json(const Estimate& e) {
    json j;
    j["method"] = method_name(e.method);
    j["value"] = e.value;
    j["se"] = e.se;
    j["ci"] = {e.ci_lo, e.ci_hi};
    return j;
}

json diagnostics_to_json(const ShrinkageDiagnostics& d) {
    json j;
    j["lambda_star"] = d.lambda_star;
    j["delta"] = d.delta;
    j["lambda_n"] = d.lambda_n;
    j["sigma2"] = d.sigma2;
    return j;
}

}  // namespace

int cmd_estimate(const std::string& config_path, const CliOverrides& ov) {
    std::optional<OutputTracker> tracker;
    try {
        const LoadedConfig cfg = load_config(config_path, ov);
        const json& doc = cfg.doc;

        // --- configuration (validated before any computation) ---
        const std::string input = doc.at("input").get<std::string>();
        const CsvSchema schema = schema_from_json(doc.at("schema"));

        std::set<std::string> want{"gold", "trial_dr", "augmented", "shrinkage"};
        if (doc.contains("estimators")) {
            want.clear();
            for (const auto& e : doc.at("estimators")) {
                const auto name = e.get<std::string>();
                if (name != "gold" && name != "trial_dr" && name != "augmented" &&
                    name != "shrinkage")
                    throw ConfigError("unknown estimator '" + name + "'");
                want.insert(name);
            }
            if (want.empty()) throw ConfigError("estimator set is empty");
        }
        const bool need_mu = want.count("trial_dr") || want.count("augmented") ||
                             want.count("shrinkage");
        const bool need_shift = want.count("augmented") || want.count("shrinkage");

        FeatureBasis k_basis, rho_basis, mu_basis;
        FitPopulation mu_pop = FitPopulation::TrialOnly;
        if (need_mu || need_shift) {
            const json& bases = doc.at("bases");
            if (need_mu) {
                mu_basis = basis_from_json(bases.at("mu"), "mu");
                mu_basis.validate(/*outcome_allowed=*/false);
            }
            if (need_shift) {
                k_basis = basis_from_json(bases.at("k"), "k");
                k_basis.validate(/*outcome_allowed=*/false);
                rho_basis = basis_from_json(bases.at("rho"), "rho");
                rho_basis.validate(/*outcome_allowed=*/true);
                if (!rho_basis.has_outcome())
                    throw ConfigError("bases.rho must contain the Outcome term");
            }
            if (bases.value("mu_population", std::string("trial_only")) == std::string("pooled"))
                mu_pop = FitPopulation::Pooled;
        }

        enum class ValMode { None, File, Split } val_mode = ValMode::None;
        std::string val_file;
        std::uint64_t split_seed = 0;
        if (doc.contains("validation") && !doc.at("validation").is_null()) {
            const json& v = doc.at("validation");
            if (v.is_string() && v.get<std::string>() == "none") {
                val_mode = ValMode::None;
            } else if (v.is_object() && v.contains("file")) {
                val_mode = ValMode::File;
                val_file = v.at("file").get<std::string>();
            } else if (v.is_object() && v.contains("split_seed")) {
                val_mode = ValMode::Split;
                split_seed = v.at("split_seed").get<std::uint64_t>();
            } else {
                throw ConfigError("validation must be \"none\", {file: path} or {split_seed: n}");
            }
        }

        enum class VarMethod { Plugin, Validation, Bootstrap } var_method = VarMethod::Plugin;
        int bootstrap_b = 0;
        if (doc.contains("variance")) {
            const json& v = doc.at("variance");
            if (v.is_string() && v.get<std::string>() == "plugin") {
                var_method = VarMethod::Plugin;
            } else if (v.is_string() && v.get<std::string>() == "validation") {
                var_method = VarMethod::Validation;
            } else if (v.is_object() && v.contains("bootstrap")) {
                var_method = VarMethod::Bootstrap;
                bootstrap_b = v.at("bootstrap").get<int>();
                if (bootstrap_b < 100) throw ConfigError("variance.bootstrap must be >= 100");
            } else {
                throw ConfigError("variance must be \"plugin\", \"validation\" or {bootstrap: B}");
            }
        }
        if (var_method == VarMethod::Validation && val_mode == ValMode::None)
            throw ConfigError("variance method 'validation' needs a validation sample");
        if (var_method == VarMethod::Validation && !need_shift)
            throw ConfigError("variance method 'validation' applies to augmented estimators");

        // --- data ---
        const Dataset full = load_csv_file(input, schema);
        Dataset primary = full;
        Dataset validation;
        if (val_mode == ValMode::Split) {
            auto halves = split_half(full, split_seed);
            primary = std::move(halves.first);
            validation = std::move(halves.second);
        } else if (val_mode == ValMode::File) {
            validation = load_csv_file(val_file, schema);
        }

        // --- nuisances and estimators ---
        const double pi_hat = estimate_pi(primary);
        json est_json;
        est_json["tau1"] = json::array();
        est_json["tau0"] = json::array();
        est_json["tau"] = json::array();
        auto push = [&](const Estimate& e, const ShrinkageDiagnostics* diag) {
            json je = estimate_to_json(e);
            if (diag) je["diagnostics"] = diagnostics_to_json(*diag);
            est_json[arm_name(e.arm)].push_back(std::move(je));
        };

        std::optional<EstimateTriple> gold, dr, aug;
        std::optional<OutcomeModel> mu1, mu0;
        std::optional<ShiftWeights> weights;
        std::optional<InfluenceValues> iv;
        std::optional<LogisticModel> k_model, rho_model;

        if (want.count("gold")) gold = tau_gold(primary);
        if (need_mu) {
            mu1 = fit_outcome(primary, 1, mu_basis, mu_pop);
            mu0 = fit_outcome(primary, 0, mu_basis, mu_pop);
            dr = tau_trial_dr(primary, *mu1, *mu0, pi_hat);
        }
        if (need_shift) {
            const Dataset& shift_data = validation.empty() ? primary : validation;
            k_model = fit_k(shift_data, k_basis);
            rho_model = fit_rho(shift_data, rho_basis);
            weights = eval_weights(primary, *k_model, *rho_model);
            aug = tau_augmented(primary, *weights, *mu1, *mu0, pi_hat);
            iv = influence_values(primary, *weights, *mu1, *mu0, pi_hat, aug->tau1.value,
                                  aug->tau0.value);
        }

        std::optional<ValidationVariance> vv;
        if (var_method == VarMethod::Validation) {
            vv = var_validation(primary, *iv, validation, *k_model, *rho_model, *mu0, *mu1,
                                pi_hat);
            const std::size_t N = primary.n_total();
            aug->tau1 = make_estimate(aug->tau1.value, vv->se_tau1(N), Method::Augmented,
                                      ArmTag::Tau1);
            aug->tau0 = make_estimate(aug->tau0.value, vv->se_tau0(N), Method::Augmented,
                                      ArmTag::Tau0);
            aug->tau = make_estimate(aug->tau.value, vv->se_tau(N), Method::Augmented,
                                     ArmTag::Tau);
        }

        std::optional<BootstrapResult> boot;
        if (var_method == VarMethod::Bootstrap) {
            BootstrapSpec bspec;
            bspec.k_basis = k_basis;
            bspec.rho_basis = rho_basis;
            bspec.mu_basis = mu_basis;
            bspec.mu_population = mu_pop;
            boot = bootstrap_se(primary, bspec, bootstrap_b, cfg.seed);
            auto apply = [&](EstimateTriple& t, const SETriple& se) {
                t.tau1 = make_estimate(t.tau1.value, se.tau1, t.tau1.method, ArmTag::Tau1);
                t.tau0 = make_estimate(t.tau0.value, se.tau0, t.tau0.method, ArmTag::Tau0);
                t.tau = make_estimate(t.tau.value, se.tau, t.tau.method, ArmTag::Tau);
            };
            if (gold) apply(*gold, boot->gold);
            if (dr) apply(*dr, boot->trial_dr);
            if (aug) apply(*aug, boot->augmented);
        }

        if (gold) {
            push(gold->tau1, nullptr);
            push(gold->tau0, nullptr);
            push(gold->tau, nullptr);
        }
        if (want.count("trial_dr")) {
            push(dr->tau1, nullptr);
            push(dr->tau0, nullptr);
            push(dr->tau, nullptr);
        }
        if (want.count("augmented")) {
            push(aug->tau1, nullptr);
            push(aug->tau0, nullptr);
            push(aug->tau, nullptr);
        }
        if (want.count("shrinkage")) {
            auto s1 = shrink(dr->tau1, aug->tau1, *iv, ArmTag::Tau1);
            auto s0 = shrink(dr->tau0, aug->tau0, *iv, ArmTag::Tau0);
            auto st = shrink_combined(dr->tau, aug->tau, *iv);
            if (var_method == VarMethod::Validation) {
                // Validation correction enters var(tau_hat) and var(diff);
                // cov(tau_hat, tau_tilde) is unchanged because the validation
                // sample is independent of the primary influence values.
                auto adjust = [&](std::pair<Estimate, ShrinkageDiagnostics>& s, ArmTag arm,
                                  double sigma2_val, double plain_ms) {
                    const InfluenceMoments m = influence_moments(*iv, arm);
                    const double corr =
                        (sigma2_val - plain_ms) / static_cast<double>(primary.n_total());
                    const double var_hat = m.var_hat + corr;
                    const double var_diff = m.var_diff + corr;
                    if (var_diff > 1e-14) {
                        s.second.sigma2 =
                            (m.var_tilde * var_hat - m.cov * m.cov) / var_diff;
                    }
                    const double se =
                        std::sqrt(std::max(std::min(s.second.sigma2, m.var_tilde), 0.0));
                    s.first = make_estimate(s.first.value, se, Method::Shrinkage, arm);
                };
                const std::size_t N = primary.n_total();
                auto plain = [&](ArmTag a) {
                    const double se = var_plugin(*iv, a);
                    return se * se * static_cast<double>(N);  // mean(psi^2)
                };
                adjust(s1, ArmTag::Tau1, vv->sigma2_val_tau1, plain(ArmTag::Tau1));
                adjust(s0, ArmTag::Tau0, vv->sigma2_val_tau0, plain(ArmTag::Tau0));
                adjust(st, ArmTag::Tau, vv->sigma2_val_tau, plain(ArmTag::Tau));
            } else if (var_method == VarMethod::Bootstrap) {
                s1.first = make_estimate(s1.first.value, boot->shrinkage.tau1,
                                         Method::Shrinkage, ArmTag::Tau1);
                s0.first = make_estimate(s0.first.value, boot->shrinkage.tau0,
                                         Method::Shrinkage, ArmTag::Tau0);
                st.first = make_estimate(st.first.value, boot->shrinkage.tau,
                                         Method::Shrinkage, ArmTag::Tau);
            }
            push(s1.first, &s1.second);
            push(s0.first, &s0.second);
            push(st.first, &st.second);
        }

        // --- outputs ---
        tracker.emplace(cfg.out_dir);
        {
            json report;
            report["meta"] = {{"tool_version", kToolVersion},
                              {"config_hash", cfg.hash},
                              {"seed", cfg.seed}};
            report["n"] = primary.n_trial();
            report["N"] = primary.n_total();
            report["kappa_hat"] = primary.kappa_hat();
            report["pi_hat"] = pi_hat;
            if (val_mode != ValMode::None) report["validation_rows"] = validation.n_total();
            report["estimates"] = est_json;
            auto out = tracker->create("report.json");
            out << report.dump(2) << "\n";
        }
        {
            auto out = tracker->create("influence.csv");
            out << "# " << header_comment(cfg) << "\n";
            out << "row,r,t,k,rho,psi_tilde1,psi_tilde0,psi1,psi0\n";
            if (iv) {
                char buf[220];
                for (std::size_t i = 0; i < iv->size(); ++i) {
                    const Record& rec = primary[i];
                    std::snprintf(buf, sizeof(buf), "%zu,%d,%d,%.10g,%.10g,%.10g,%.10g,%.10g,%.10g",
                                  i, rec.r, rec.t, weights->k[i],
                                  weights->has_rho(i) ? weights->rho[i] : std::nan(""),
                                  iv->psi_tilde1[i], iv->psi_tilde0[i], iv->psi1[i], iv->psi0[i]);
                    out << buf << "\n";
                }
            }
        }
        return 0;
    } catch (const Error& e) {
        if (tracker) tracker->rollback();
        return report_error(e);
    } catch (const std::exception& e) {
        if (tracker) tracker->rollback();
        return report_error(e);
    }
}

int cmd_simulate(const std::string& config_path, const CliOverrides& ov) {
    std::optional<OutputTracker> tracker;
    try {
        const LoadedConfig cfg = load_config(config_path, ov);
        const json& doc = cfg.doc;
        const int experiment = doc.value("experiment", 1);
        const DGPSpec dgp = doc.contains("dgp") ? dgp_from_json(doc.at("dgp")) : DGPSpec{};
        const int replications = doc.value("replications", 2000);
        if (replications < 1) throw ConfigError("replications must be positive");

        std::vector<MCCell> cells;
        if (experiment == 1) {
            std::vector<double> multipliers{0.0, 0.5, 1.0, 2.0, 4.0};
            if (doc.contains("multipliers"))
                multipliers = doc.at("multipliers").get<std::vector<double>>();
            cells = run_experiment1(dgp, multipliers, replications, cfg.seed);
        } else if (experiment == 2) {
            std::vector<ScenarioSpec> scenarios = default_scenarios();
            if (doc.contains("scenarios")) {
                scenarios.clear();
                for (const auto& s : doc.at("scenarios")) {
                    ScenarioSpec spec;
                    spec.mu_correct = s.value("mu_correct", true);
                    spec.k_correct = s.value("k_correct", true);
                    spec.rho_correct = s.value("rho_correct", true);
                    spec.validation_multiplier = s.value("validation_multiplier", 0.0);
                    if (s.value("weight_source", std::string("fitted")) == std::string("oracle"))
                        spec.weight_source = WeightSource::Oracle;
                    scenarios.push_back(spec);
                }
                if (scenarios.empty()) throw ConfigError("scenario list is empty");
            }
            cells = run_experiment2(dgp, scenarios, replications, cfg.seed);
        } else {
            throw ConfigError("experiment must be 1 or 2");
        }

        tracker.emplace(cfg.out_dir);
        auto out = tracker->create("experiment.csv");
        write_mc_csv(cells, out, header_comment(cfg));
        return 0;
    } catch (const Error& e) {
        if (tracker) tracker->rollback();
        return report_error(e);
    } catch (const std::exception& e) {
        if (tracker) tracker->rollback();
        return report_error(e);
    }
}

int cmd_diagnose(const std::string& config_path, const CliOverrides& ov) {
    std::optional<OutputTracker> tracker;
    try {
        const LoadedConfig cfg = load_config(config_path, ov);
        const json& doc = cfg.doc;
        const std::string input = doc.at("input").get<std::string>();
        const CsvSchema schema = schema_from_json(doc.at("schema"));
        const Dataset ds = load_csv_file(input, schema);

        FeatureBasis mu0_basis;
        if (doc.contains("mu0_basis")) {
            mu0_basis = basis_from_json(doc.at("mu0_basis"), "mu0");
        } else {
            mu0_basis.terms.push_back(intercept());
            for (std::size_t j = 0; j < ds.dim(); ++j)
                mu0_basis.terms.push_back(linear(static_cast<int>(j)));
        }
        mu0_basis.validate(/*outcome_allowed=*/false);

        const auto names = schema.covariate_columns;
        const MarginalShift marg = marginal_shift(ds, names);
        const OutcomeModel s_model = fit_outcome(ds, 0, mu0_basis, FitPopulation::Pooled);
        bool single_bin = false;
        const auto deciles = decile_outcome_summary(ds, s_model, &single_bin);

        tracker.emplace(cfg.out_dir);
        const std::string comment = header_comment(cfg);
        {
            auto out = tracker->create("pca.csv");
            if (ds.dim() >= 2) {
                const PcaBlock pca = pca_project(ds, names);
                write_pca_csv(pca, ds, out, comment);
            } else {
                out << "# " << comment << "\n";
                out << "notice\n";
                out << "pca skipped: requires at least 2 covariates\n";
            }
        }
        {
            auto out = tracker->create("proportions.csv");
            write_proportions_csv(marg.proportions, out, comment);
        }
        {
            auto out = tracker->create("ecdf.csv");
            write_ecdf_csv(marg.ecdfs, out, comment);
        }
        {
            auto out = tracker->create("deciles.csv");
            write_deciles_csv(deciles, out,
                              single_bin ? comment + " single_bin_fallback=1" : comment);
        }
        return 0;
    } catch (const Error& e) {
        if (tracker) tracker->rollback();
        return report_error(e);
    } catch (const std::exception& e) {
        if (tracker) tracker->rollback();
        return report_error(e);
    }
}

int cli_main(int argc, char** argv) {
    CLI::App app{"distribution-shift-aware external-control borrowing"};
    app.require_subcommand(1);
    std::string config_path;
    CliOverrides ov;
    std::uint64_t seed_val = 0;
    std::string out_val;

    auto add_common = [&](CLI::App* sub) {
        sub->add_option("--config", config_path, "JSON config file")->required();
        auto* s = sub->add_option("--seed", seed_val, "override config seed");
        auto* o = sub->add_option("--out", out_val, "override output directory");
        sub->callback([&, s, o]() {
            if (s->count()) ov.seed = seed_val;
            if (o->count()) ov.out_dir = out_val;
        });
    };
    add_common(app.add_subcommand("estimate", "treatment-effect estimation on CSV data"));
    add_common(app.add_subcommand("simulate", "Monte Carlo experiments"));
    add_common(app.add_subcommand("diagnose", "distribution-shift diagnostics"));

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        return app.exit(e);
    }
    if (app.got_subcommand("estimate")) return cmd_estimate(config_path, ov);
    if (app.got_subcommand("simulate")) return cmd_simulate(config_path, ov);
    return cmd_diagnose(config_path, ov);
}

}  // namespace shiftfuse
