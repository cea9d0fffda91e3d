#include <cstdlib>
#include <fstream>
#include <functional>
#include <map>
#include <sstream>
#include <stdexcept>

#include "isac/harness.hpp"

namespace isac {

namespace {

void require(bool ok, const std::string& what) {
    if (!ok) throw std::invalid_argument(what);
}

std::string trim(const std::string& s) {
    const auto b = s.find_first_not_of(" \t\r\n");
    if (b == std::string::npos) return "";
    const auto e = s.find_last_not_of(" \t\r\n");
    return s.substr(b, e - b + 1);
}

int to_int(const std::string& key, const std::string& v) {
    try {
        size_t pos = 0;
        const int r = std::stoi(v, &pos);
        require(pos == v.size(), "config: bad integer for " + key);
        return r;
    } catch (const std::invalid_argument&) {
        throw;
    } catch (const std::exception&) {
        throw std::invalid_argument("config: bad integer for " + key);
    }
}

double to_double(const std::string& key, const std::string& v) {
    try {
        size_t pos = 0;
        const double r = std::stod(v, &pos);
        require(pos == v.size(), "config: bad number for " + key);
        return r;
    } catch (const std::invalid_argument&) {
        throw;
    } catch (const std::exception&) {
        throw std::invalid_argument("config: bad number for " + key);
    }
}

uint64_t to_u64(const std::string& key, const std::string& v) {
    try {
        size_t pos = 0;
        const uint64_t r = std::stoull(v, &pos);
        require(pos == v.size(), "config: bad unsigned integer for " + key);
        return r;
    } catch (const std::invalid_argument&) {
        throw;
    } catch (const std::exception&) {
        throw std::invalid_argument("config: bad unsigned integer for " + key);
    }
}

bool to_bool(const std::string& key, const std::string& v) {
    if (v == "true" || v == "1" || v == "yes") return true;
    if (v == "false" || v == "0" || v == "no") return false;
    throw std::invalid_argument("config: bad boolean for " + key);
}

std::vector<double> to_double_list(const std::string& key, const std::string& v) {
    std::vector<double> out;
    std::stringstream ss(v);
    std::string item;
    while (std::getline(ss, item, ',')) {
        item = trim(item);
        require(!item.empty(), "config: empty list entry for " + key);
        out.push_back(to_double(key, item));
    }
    require(!out.empty(), "config: empty list for " + key);
    return out;
}

using Setter = std::function<void(ExperimentConfig&, const std::string&, const std::string&)>;

const std::map<std::string, std::map<std::string, Setter>>& setters() {
    auto di = [](auto field) {
        return Setter([field](ExperimentConfig& c, const std::string& k, const std::string& v) {
            c.*field = to_int(k, v);
        });
    };
    auto dd = [](auto field) {
        return Setter([field](ExperimentConfig& c, const std::string& k, const std::string& v) {
            c.*field = to_double(k, v);
        });
    };
    auto db = [](auto field) {
        return Setter([field](ExperimentConfig& c, const std::string& k, const std::string& v) {
            c.*field = to_bool(k, v);
        });
    };
    static const std::map<std::string, std::map<std::string, Setter>> table = {
        {"scenario",
         {
             {"k", di(&ExperimentConfig::k)},
             {"e_tx", dd(&ExperimentConfig::e_tx)},
             {"n0", dd(&ExperimentConfig::n0)},
             {"sigma_r2", dd(&ExperimentConfig::sigma_r2)},
             {"sigma_c2", dd(&ExperimentConfig::sigma_c2)},
             {"m", di(&ExperimentConfig::m)},
             {"impaired", db(&ExperimentConfig::impaired)},
             {"impair_rx", db(&ExperimentConfig::impair_rx)},
             {"sigma_lambda", dd(&ExperimentConfig::sigma_lambda)},
             {"comm_lo_deg", dd(&ExperimentConfig::comm_lo_deg)},
             {"comm_hi_deg", dd(&ExperimentConfig::comm_hi_deg)},
             {"target_lo_deg", dd(&ExperimentConfig::target_lo_deg)},
             {"target_hi_deg", dd(&ExperimentConfig::target_hi_deg)},
         }},
        {"train",
         {
             {"md_iterations", di(&ExperimentConfig::md_iterations)},
             {"md_batch", di(&ExperimentConfig::md_batch)},
             {"md_n_grid", di(&ExperimentConfig::md_n_grid)},
             {"md_lr", dd(&ExperimentConfig::md_lr)},
             {"md_init_noise_std", dd(&ExperimentConfig::md_init_noise_std)},
             {"md_masked_softmax", db(&ExperimentConfig::md_masked_softmax)},
             {"md_temperature", dd(&ExperimentConfig::md_temperature)},
             {"nn_iterations_per_phase", di(&ExperimentConfig::nn_iterations_per_phase)},
             {"nn_batch", di(&ExperimentConfig::nn_batch)},
             {"nn_width", di(&ExperimentConfig::nn_width)},
             {"nn_lr", dd(&ExperimentConfig::nn_lr)},
             {"nn_omega_r", dd(&ExperimentConfig::nn_omega_r)},
             {"nn_bce_all_samples", db(&ExperimentConfig::nn_bce_all_samples)},
         }},
        {"eval",
         {
             {"n_eval", di(&ExperimentConfig::n_eval)},
             {"n_cal", di(&ExperimentConfig::n_cal)},
             {"target_pfa", dd(&ExperimentConfig::target_pfa)},
             {"omega_r", dd(&ExperimentConfig::omega_r)},
             {"omega_r_list",
              [](ExperimentConfig& c, const std::string& k, const std::string& v) {
                  c.omega_r_list = to_double_list(k, v);
              }},
             {"baseline_n_grid", di(&ExperimentConfig::baseline_n_grid)},
             {"maprt_refine", db(&ExperimentConfig::maprt_refine)},
             {"method",
              [](ExperimentConfig& c, const std::string&, const std::string& v) {
                  c.method = v;
              }},
             {"artifact",
              [](ExperimentConfig& c, const std::string&, const std::string& v) {
                  c.artifact = v;
              }},
             {"gen_lo_deg", dd(&ExperimentConfig::gen_lo_deg)},
             {"gen_hi_deg", dd(&ExperimentConfig::gen_hi_deg)},
             {"seed",
              [](ExperimentConfig& c, const std::string& k, const std::string& v) {
                  c.seed = to_u64(k, v);
              }},
             {"geometry_seed",
              [](ExperimentConfig& c, const std::string& k, const std::string& v) {
                  c.geometry_seed = to_u64(k, v);
              }},
             {"train_seed",
              [](ExperimentConfig& c, const std::string& k, const std::string& v) {
                  c.train_seed = to_u64(k, v);
              }},
             {"eval_seed",
              [](ExperimentConfig& c, const std::string& k, const std::string& v) {
                  c.eval_seed = to_u64(k, v);
              }},
         }},
    };
    return table;
}

} // namespace

ScenarioConfig ExperimentConfig::scenario() const {
    ScenarioConfig s;
    s.e_tx = e_tx;
    s.n0 = n0;
    s.sigma_r2 = sigma_r2;
    s.sigma_c2 = sigma_c2;
    s.m = m;
    s.comm_sector = comm_sector();
    s.target_prior = target_sector();
    return s;
}

AngularSector ExperimentConfig::target_sector() const {
    return AngularSector::from_degrees(target_lo_deg, target_hi_deg);
}

AngularSector ExperimentConfig::comm_sector() const {
    return AngularSector::from_degrees(comm_lo_deg, comm_hi_deg);
}

AngularSector ExperimentConfig::generalization_sector() const {
    return AngularSector::from_degrees(gen_lo_deg, gen_hi_deg);
}

uint64_t ExperimentConfig::resolved_geometry_seed() const {
    return geometry_seed ? *geometry_seed : Rng(seed).derive(1).seed();
}

uint64_t ExperimentConfig::resolved_train_seed() const {
    return train_seed ? *train_seed : Rng(seed).derive(2).seed();
}

uint64_t ExperimentConfig::resolved_eval_seed() const {
    return eval_seed ? *eval_seed : Rng(seed).derive(3).seed();
}

std::pair<UlaGeometry, UlaGeometry> ExperimentConfig::make_geometries() const {
    if (!impaired) {
        UlaGeometry g = UlaGeometry::ideal(k);
        return {g, g};
    }
    Rng grng(resolved_geometry_seed());
    UlaGeometry tx = perturb_geometry(k, sigma_lambda, grng);
    UlaGeometry rx = impair_rx ? tx : UlaGeometry::ideal(k);
    return {tx, rx};
}

void ExperimentConfig::validate() const {
    scenario().validate();
    require(k >= 2, "config: k must be >= 2");
    require(sigma_lambda >= 0.0, "config: sigma_lambda must be >= 0");
    require(target_pfa > 0.0 && target_pfa < 1.0, "config: target_pfa must be in (0,1)");
    require(n_eval >= 10.0 / target_pfa, "config: n_eval must be >= 10/target_pfa");
    require(n_cal >= 10.0 / target_pfa, "config: n_cal must be >= 10/target_pfa");
    require(omega_r >= 0.0 && omega_r <= 1.0, "config: omega_r must be in [0,1]");
    require(!omega_r_list.empty(), "config: omega_r_list must be nonempty");
    for (size_t i = 0; i < omega_r_list.size(); ++i) {
        require(omega_r_list[i] >= 0.0 && omega_r_list[i] <= 1.0,
                "config: omega_r_list values must be in [0,1]");
        if (i > 0) {
            require(omega_r_list[i] > omega_r_list[i - 1],
                    "config: omega_r_list must be strictly increasing");
        }
    }
    require(baseline_n_grid >= k, "config: baseline_n_grid must be >= k");
    require(md_n_grid >= k, "config: md_n_grid must be >= k");
    require(md_iterations >= 0 && md_batch > 0, "config: bad md training counts");
    require(md_lr >= 0.0 && md_init_noise_std >= 0.0, "config: bad md training reals");
    require(md_temperature > 0.0, "config: md_temperature must be positive");
    require(nn_iterations_per_phase >= 0 && nn_batch > 0 && nn_width > 0,
            "config: bad nn training counts");
    require(nn_lr >= 0.0, "config: nn_lr must be >= 0");
    require(nn_omega_r >= 0.0 && nn_omega_r <= 1.0, "config: nn_omega_r must be in [0,1]");
    require(method == "baseline" || method == "md" || method == "nn",
            "config: method must be baseline, md or nn");
    target_sector();
    comm_sector();
    generalization_sector();
}

ExperimentConfig parse_config(const std::string& text) {
    ExperimentConfig cfg;
    std::istringstream is(text);
    std::string line;
    std::string section;
    int lineno = 0;
    while (std::getline(is, line)) {
        ++lineno;
        const std::string t = trim(line);
        if (t.empty() || t[0] == '#' || t[0] == ';') continue;
        if (t.front() == '[') {
            require(t.back() == ']', "config line " + std::to_string(lineno) + ": bad section");
            section = trim(t.substr(1, t.size() - 2));
            require(setters().count(section) == 1,
                    "config line " + std::to_string(lineno) + ": unknown section [" + section +
                        "]");
            continue;
        }
        const auto eq = t.find('=');
        require(eq != std::string::npos,
                "config line " + std::to_string(lineno) + ": expected key = value");
        const std::string key = trim(t.substr(0, eq));
        const std::string value = trim(t.substr(eq + 1));
        require(!key.empty(), "config line " + std::to_string(lineno) + ": empty key");
        require(!section.empty(),
                "config line " + std::to_string(lineno) + ": key outside any section");
        const auto& sec = setters().at(section);
        const auto it = sec.find(key);
        if (it == sec.end()) {
            throw std::invalid_argument("config: unknown key '" + key + "' in section [" +
                                        section + "]");
        }
        it->second(cfg, key, value);
    }
    if (const char* env = std::getenv("ISAC_SEED")) {
        cfg.seed = to_u64("ISAC_SEED", env);
    }
    cfg.validate();
    return cfg;
}

ExperimentConfig load_config(const std::string& path) {
    std::ifstream is(path);
    if (!is) throw std::invalid_argument("config: cannot open " + path);
    std::ostringstream buf;
    buf << is.rdbuf();
    return parse_config(buf.str());
}

} // namespace isac
