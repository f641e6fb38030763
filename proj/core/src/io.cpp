#include "rigidity/io.hpp"

#include <fstream>
#include <sstream>
#include <stdexcept>

namespace rigidity {

namespace {

json vec2_to_json(const Vec2& v) { return json::array({v.x, v.y}); }
Vec2 vec2_from_json(const json& j) { return {j.at(0).get<double>(), j.at(1).get<double>()}; }

const char* side_name(const EdgeKey& e, bool named_cell_is_lo) {
    if (e.orient == 0) return named_cell_is_lo ? "N" : "S";
    return named_cell_is_lo ? "E" : "W";
}

}  // namespace

json field_to_json(const DeformationField& f) {
    json j;
    j["spacing_h"] = f.h;
    j["nx"] = f.nx;
    j["ny"] = f.ny;
    j["origin"] = vec2_to_json(f.origin);
    json values = json::array();
    for (const auto& v : f.values) values.push_back(vec2_to_json(v));
    j["values"] = std::move(values);
    json active = json::array();
    for (auto a : f.active) active.push_back(static_cast<int>(a));
    j["active"] = std::move(active);
    json jumps = json::array();
    for (const auto& [k, e] : f.jumps) {
        // name the lower/left cell when it exists, else the other side
        int ci, cj;
        bool named_lo;
        if (k.orient == 0) {
            named_lo = k.j > 0;
            ci = k.i;
            cj = named_lo ? k.j - 1 : k.j;
        } else {
            named_lo = k.i > 0;
            ci = named_lo ? k.i - 1 : k.i;
            cj = k.j;
        }
        const Vec2 p0 = named_lo ? e.lo0 : e.hi0;
        const Vec2 p1 = named_lo ? e.lo1 : e.hi1;
        const Vec2 m0 = named_lo ? e.hi0 : e.lo0;
        const Vec2 m1 = named_lo ? e.hi1 : e.lo1;
        jumps.push_back(json{{"cell", json::array({ci, cj})},
                             {"side", side_name(k, named_lo)},
                             {"plus", json::array({p0.x, p0.y, p1.x, p1.y})},
                             {"minus", json::array({m0.x, m0.y, m1.x, m1.y})}});
    }
    j["jump_edges"] = std::move(jumps);
    return j;
}

DeformationField field_from_json(const json& j) {
    DeformationField f;
    f.h = j.at("spacing_h").get<double>();
    f.nx = j.at("nx").get<int>();
    f.ny = j.at("ny").get<int>();
    if (j.contains("origin")) f.origin = vec2_from_json(j.at("origin"));
    const auto& values = j.at("values");
    if (static_cast<int>(values.size()) != f.node_count())
        throw std::runtime_error("field: values array does not match (nx+1)*(ny+1)");
    f.values.reserve(values.size());
    for (const auto& v : values) f.values.push_back(vec2_from_json(v));
    const auto& active = j.at("active");
    if (static_cast<int>(active.size()) != f.cell_count())
        throw std::runtime_error("field: active array does not match nx*ny");
    f.active.reserve(active.size());
    for (const auto& a : active) f.active.push_back(static_cast<std::uint8_t>(a.get<int>()));
    for (const auto& je : j.value("jump_edges", json::array())) {
        const int ci = je.at("cell").at(0).get<int>();
        const int cj = je.at("cell").at(1).get<int>();
        const std::string side = je.at("side").get<std::string>();
        EdgeKey k;
        bool named_lo;
        if (side == "N") {
            k = {0, ci, cj + 1};
            named_lo = true;
        } else if (side == "S") {
            k = {0, ci, cj};
            named_lo = false;
        } else if (side == "E") {
            k = {1, ci + 1, cj};
            named_lo = true;
        } else if (side == "W") {
            k = {1, ci, cj};
            named_lo = false;
        } else {
            throw std::runtime_error("field: jump edge side must be one of N S E W");
        }
        const auto& plus = je.at("plus");
        const auto& minus = je.at("minus");
        JumpEdge e;
        e.edge = k;
        const Vec2 p0{plus.at(0).get<double>(), plus.at(1).get<double>()};
        const Vec2 p1{plus.at(2).get<double>(), plus.at(3).get<double>()};
        const Vec2 m0{minus.at(0).get<double>(), minus.at(1).get<double>()};
        const Vec2 m1{minus.at(2).get<double>(), minus.at(3).get<double>()};
        e.lo0 = named_lo ? p0 : m0;
        e.lo1 = named_lo ? p1 : m1;
        e.hi0 = named_lo ? m0 : p0;
        e.hi1 = named_lo ? m1 : p1;
        f.jumps.insert(e);
    }
    return f;
}

void save_text(const std::string& path, const std::string& text) {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw std::runtime_error("cannot open for writing: " + path);
    out << text;
    if (!out) throw std::runtime_error("write failed: " + path);
}

namespace {

json load_json(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw std::runtime_error("cannot open: " + path);
    json j;
    in >> j;
    return j;
}

}  // namespace

void save_field(const std::string& path, const DeformationField& f) {
    save_text(path, field_to_json(f).dump());
}

DeformationField load_field(const std::string& path) { return field_from_json(load_json(path)); }

json gridset_to_json(const GridSet& w) {
    const auto& lat = w.lattice();
    json j;
    j["spacing"] = lat.spacing;
    j["shift"] = lat.shift;
    j["nx"] = lat.nx;
    j["ny"] = lat.ny;
    j["origin"] = vec2_to_json(lat.origin);
    json mask = json::array();
    for (auto m : w.mask()) mask.push_back(static_cast<int>(m));
    j["mask"] = std::move(mask);
    j["ordering"] = w.ordering();
    json cuts = json::array();
    for (const auto& e : w.cut_edges())
        cuts.push_back(json::array({static_cast<int>(e.orient), e.i, e.j}));
    j["cut_edges"] = std::move(cuts);
    return j;
}

GridSet gridset_from_json(const json& j) {
    Lattice lat;
    lat.spacing = j.at("spacing").get<double>();
    lat.shift = j.value("shift", 1);
    lat.nx = j.at("nx").get<int>();
    lat.ny = j.at("ny").get<int>();
    if (j.contains("origin")) lat.origin = vec2_from_json(j.at("origin"));
    std::vector<std::uint8_t> mask;
    for (const auto& m : j.at("mask")) mask.push_back(static_cast<std::uint8_t>(m.get<int>()));
    std::vector<EdgeKey> cuts;
    for (const auto& e : j.value("cut_edges", json::array()))
        cuts.push_back({static_cast<std::int8_t>(e.at(0).get<int>()), e.at(1).get<int>(),
                        e.at(2).get<int>()});
    return extract_components(mask, lat, std::move(cuts));
}

void save_gridset(const std::string& path, const GridSet& w) {
    save_text(path, gridset_to_json(w).dump());
}

GridSet load_gridset(const std::string& path) { return gridset_from_json(load_json(path)); }

json config_to_json(const EngineConfig& cfg) {
    return json{{"eps", cfg.eps},
                {"rho", cfg.rho},
                {"q", cfg.q_exponent},
                {"t", cfg.t},
                {"h_star", cfg.h_star},
                {"eta", cfg.eta},
                {"r", cfg.r},
                {"omega", cfg.omega},
                {"z", cfg.z},
                {"zbar", cfg.zbar},
                {"c_hat", cfg.c_hat},
                {"c_star_budget", cfg.c_star_budget},
                {"kappa", cfg.kappa},
                {"m", cfg.m},
                {"carve_c", cfg.carve_c},
                {"coverage_c", cfg.coverage_c},
                {"max_steps", cfg.max_steps},
                {"budget_c1", cfg.budget_c1},
                {"budget_c", cfg.budget_c},
                {"omega_rho_factor", cfg.omega_rho_factor},
                {"enforce_v33", cfg.enforce_v33},
                {"threads", cfg.threads}};
}

EngineConfig config_from_json(const json& j) {
    EngineConfig cfg;
    cfg.eps = j.value("eps", cfg.eps);
    cfg.rho = j.value("rho", cfg.rho);
    cfg.q_exponent = j.value("q", cfg.q_exponent);
    cfg.t = j.value("t", cfg.t);
    cfg.h_star = j.value("h_star", cfg.h_star);
    cfg.eta = j.value("eta", cfg.eta);
    cfg.r = j.value("r", cfg.r);
    cfg.omega = j.value("omega", cfg.omega);
    cfg.z = j.value("z", cfg.z);
    cfg.zbar = j.value("zbar", cfg.zbar);
    cfg.c_hat = j.value("c_hat", cfg.c_hat);
    cfg.c_star_budget = j.value("c_star_budget", cfg.c_star_budget);
    cfg.kappa = j.value("kappa", cfg.kappa);
    cfg.m = j.value("m", cfg.m);
    cfg.carve_c = j.value("carve_c", cfg.carve_c);
    cfg.coverage_c = j.value("coverage_c", cfg.coverage_c);
    cfg.max_steps = j.value("max_steps", cfg.max_steps);
    cfg.budget_c1 = j.value("budget_c1", cfg.budget_c1);
    cfg.budget_c = j.value("budget_c", cfg.budget_c);
    cfg.omega_rho_factor = j.value("omega_rho_factor", cfg.omega_rho_factor);
    cfg.enforce_v33 = j.value("enforce_v33", cfg.enforce_v33);
    cfg.threads = j.value("threads", cfg.threads);
    return cfg;
}

EngineConfig load_config(const std::string& path) { return config_from_json(load_json(path)); }

namespace {

json flags_to_json(const std::vector<BudgetFlag>& flags) {
    json arr = json::array();
    for (const auto& f : flags)
        arr.push_back(json{{"name", f.name},
                           {"measured", f.measured},
                           {"reference", f.reference},
                           {"pass", f.pass}});
    return arr;
}

json energy_to_json(const EnergyBreakdown& e) {
    return json{{"bulk", e.bulk},
                {"surface", e.surface},
                {"relaxed_surface", e.relaxed_surface},
                {"epsilon", e.epsilon},
                {"rho", e.rho}};
}

}  // namespace

json report_to_json(const RigidityReport& rep) {
    json j;
    j["H1_Ju"] = rep.H1_Ju;
    j["H1_Ju_with_rim"] = rep.H1_Ju_with_rim;
    j["u_L2_sq"] = rep.u_L2_sq;
    j["sym_strain_sq"] = rep.sym_strain_sq;
    j["grad_u_sq"] = rep.grad_u_sq;
    j["E_eps_y"] = energy_to_json(rep.E_eps_y);
    j["E_eps_rho_yhat"] = energy_to_json(rep.E_eps_rho_yhat);
    j["mod_dist_y2"] = rep.mod_dist_y2;
    j["mod_dist_grad2"] = rep.mod_dist_grad2;
    j["min_piece_area_over_rho"] = rep.min_piece_area_over_rho;
    j["total_perimeter"] = rep.total_perimeter;
    j["budget_flags"] = flags_to_json(rep.budget_flags);
    return j;
}

json linear_report_to_json(const LinearVariantReport& rep) {
    json j;
    j["sym_strain_sq"] = rep.sym_strain_sq;
    j["piecewise_dist_sq"] = rep.piecewise_dist_sq;
    j["H1_Ju"] = rep.H1_Ju;
    j["total_perimeter"] = rep.total_perimeter;
    json pieces = json::array();
    for (const auto& p : rep.pieces)
        pieces.push_back(json{{"cells", p.cells.size()},
                              {"a", p.motion.a},
                              {"c", json::array({p.motion.c.x, p.motion.c.y})}});
    j["pieces"] = std::move(pieces);
    j["budget_flags"] = flags_to_json(rep.budget_flags);
    return j;
}

json trace_record_to_json(const StepRecord& r) {
    return json{{"j", r.j},
                {"s_j", r.s},
                {"eps_j", r.eps},
                {"k_j", r.k},
                {"lambda_j", r.lambda},
                {"beta", r.beta},
                {"gamma", r.gamma},
                {"alpha", r.alpha},
                {"carved_cells", r.carved_cells},
                {"star_norm", r.star_norm},
                {"delta2", r.delta2},
                {"delta4", r.delta4},
                {"heal_dist2", r.heal_dist2},
                {"heal_move2", r.heal_move2},
                {"heal_grad_move2", r.heal_grad_move2},
                {"dropped_tiles", r.dropped_tiles}};
}

std::string labels_csv(const std::vector<int>& labels, int nx, int ny) {
    std::ostringstream out;
    for (int j = 0; j < ny; ++j) {
        for (int i = 0; i < nx; ++i) {
            if (i) out << ',';
            out << labels[static_cast<std::size_t>(j * nx + i)];
        }
        out << '\n';
    }
    return out.str();
}

json motions_json(const CaccioppoliPartition& part) {
    json arr = json::array();
    for (const auto& p : part.pieces) {
        const auto& r = p.motion.R;
        arr.push_back(json{{"R", json::array({json::array({r(0, 0), r(0, 1)}),
                                              json::array({r(1, 0), r(1, 1)})})},
                           {"c", json::array({p.motion.c.x, p.motion.c.y})},
                           {"cells", p.cells.size()},
                           {"perimeter", p.perimeter}});
    }
    return arr;
}

std::string separator_csv(const std::vector<EdgeKey>& edges) {
    std::ostringstream out;
    out << "orient,i,j\n";
    for (const auto& e : edges)
        out << static_cast<int>(e.orient) << ',' << e.i << ',' << e.j << '\n';
    return out.str();
}

std::string probe_csv(const ProbeResult& probe) {
    std::ostringstream out;
    out << "delta,ratio,constant\n";
    out.precision(17);
    for (const auto& p : probe.points)
        out << p.parameter << ',' << p.ratio << ',' << p.constant << '\n';
    return out.str();
}

}  // namespace rigidity
