#include "neuroddaf/graphnet.hpp"

#include <Eigen/Dense>

#include <cmath>
#include <set>
#include <stdexcept>

namespace neuroddaf::graphnet {

namespace {
constexpr double kEarthRadiusKm = 6371.0088;
constexpr double kDegToRad = 0.017453292519943295;
} // namespace

const std::vector<WindSample>& DynamicGraph::wind_at(int t) const {
    if (t < 0 || t >= static_cast<int>(wind_.size()))
        throw std::out_of_range("DynamicGraph: no wind data at t=" + std::to_string(t));
    return wind_[t];
}

Tensor DynamicGraph::weight_matrix() const {
    Tensor w(n(), n());
    for (const Edge& e : edges_) {
        w(e.i, e.j) = e.weight;
        w(e.j, e.i) = e.weight;
    }
    return w;
}

double great_circle_km(const Station& a, const Station& b) {
    double phi1 = a.lat * kDegToRad, phi2 = b.lat * kDegToRad;
    double dphi = (b.lat - a.lat) * kDegToRad;
    double dlam = (b.lon - a.lon) * kDegToRad;
    double s = std::sin(dphi / 2), t = std::sin(dlam / 2);
    double h = s * s + std::cos(phi1) * std::cos(phi2) * t * t;
    return 2.0 * kEarthRadiusKm * std::asin(std::min(1.0, std::sqrt(h)));
}

// Initial bearing from a to b: radians clockwise from north.
static double bearing_rad(const Station& a, const Station& b) {
    double phi1 = a.lat * kDegToRad, phi2 = b.lat * kDegToRad;
    double dlam = (b.lon - a.lon) * kDegToRad;
    double y = std::sin(dlam) * std::cos(phi2);
    double x = std::cos(phi1) * std::sin(phi2) - std::sin(phi1) * std::cos(phi2) * std::cos(dlam);
    return std::atan2(y, x);
}

DynamicGraph build_graph(const std::vector<Station>& stations,
                         double length_scale_km, double cutoff_km) {
    if (stations.empty()) throw std::invalid_argument("build_graph: no stations");
    if (length_scale_km <= 0 || cutoff_km <= 0)
        throw std::invalid_argument("build_graph: length_scale and cutoff must be positive");
    std::set<std::string> ids;
    for (const Station& s : stations) {
        if (!std::isfinite(s.lat) || !std::isfinite(s.lon))
            throw std::invalid_argument("build_graph: non-finite coordinate for station " + s.id);
        if (s.lat < -90 || s.lat > 90 || s.lon < -180 || s.lon > 180)
            throw std::invalid_argument("build_graph: coordinate out of range for station " + s.id);
        if (!ids.insert(s.id).second)
            throw std::invalid_argument("build_graph: duplicate station id " + s.id);
    }
    std::vector<Edge> edges;
    int n = static_cast<int>(stations.size());
    for (int i = 0; i < n; ++i)
        for (int j = i + 1; j < n; ++j) {
            double d = great_circle_km(stations[i], stations[j]);
            if (d <= cutoff_km) {
                double w = std::exp(-(d * d) / (length_scale_km * length_scale_km));
                edges.push_back({i, j, d, w});
            }
        }
    return DynamicGraph(stations, std::move(edges));
}

Tensor laplacian(const DynamicGraph& g, int /*t*/) {
    Tensor w = g.weight_matrix();
    int n = g.n();
    Tensor l(n, n);
    for (int i = 0; i < n; ++i) {
        double deg = 0.0;
        for (int j = 0; j < n; ++j) deg += w(i, j);
        for (int j = 0; j < n; ++j) l(i, j) = -w(i, j);
        l(i, i) = deg;
    }
    return l;
}

Tensor advection_operator(const DynamicGraph& g, int t, OperatorMode mode) {
    const auto& wind = g.wind_at(t);
    int n = g.n();
    Tensor m(n, n);
    const auto& st = g.stations();
    for (const Edge& e : g.edges()) {
        // Transfer from j into i when the wind at j blows toward i.
        for (auto [i, j] : {std::pair{e.i, e.j}, std::pair{e.j, e.i}}) {
            const WindSample& w = wind[j];
            if (w.speed <= 0.0) continue;
            double flow = (w.direction + 180.0) * kDegToRad;
            double c = std::cos(flow - bearing_rad(st[j], st[i]));
            if (c > 0.0) m(i, j) = e.weight * w.speed * c;
        }
    }
    // Row-normalize inflows.
    for (int i = 0; i < n; ++i) {
        double s = 0.0;
        for (int j = 0; j < n; ++j) s += m(i, j);
        if (s > 0.0)
            for (int j = 0; j < n; ++j) m(i, j) /= s;
    }
    if (mode == OperatorMode::theory) {
        Tensor a(n, n);
        for (int i = 0; i < n; ++i)
            for (int j = 0; j < n; ++j) a(i, j) = 0.5 * (m(i, j) - m(j, i));
        return a;
    }
    return m;
}

Tensor wind_features(const DynamicGraph& g, int t) {
    const auto& wind = g.wind_at(t);
    Tensor f(g.n(), 3);
    for (int i = 0; i < g.n(); ++i) {
        double flow = (wind[i].direction + 180.0) * kDegToRad;
        f(i, 0) = wind[i].speed;
        f(i, 1) = std::sin(flow);
        f(i, 2) = std::cos(flow);
    }
    return f;
}

Tensor adjacency_mask(const DynamicGraph& g) {
    int n = g.n();
    Tensor m(n, n);
    for (int i = 0; i < n; ++i) m(i, i) = 1.0;
    for (const Edge& e : g.edges()) {
        m(e.i, e.j) = 1.0;
        m(e.j, e.i) = 1.0;
    }
    return m;
}

static Eigen::VectorXd sym_eigenvalues(const Tensor& sym) {
    int n = sym.rows();
    Eigen::MatrixXd m(n, n);
    for (int i = 0; i < n; ++i)
        for (int j = 0; j < n; ++j) m(i, j) = sym(i, j);
    Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(m, Eigen::EigenvaluesOnly);
    return es.eigenvalues();
}

double lambda_min_pos(const Tensor& sym, double zero_tol) {
    Eigen::VectorXd ev = sym_eigenvalues(sym);
    for (int i = 0; i < ev.size(); ++i)
        if (ev[i] > zero_tol) return ev[i];
    return 0.0;
}

double lambda_max(const Tensor& sym) {
    Eigen::VectorXd ev = sym_eigenvalues(sym);
    return ev.size() ? ev[ev.size() - 1] : 0.0;
}

ad::Var k_hop_propagate(ad::Tape& tape, const Tensor& op, ad::Var z,
                        const std::vector<ad::Var>& coeffs) {
    if (coeffs.empty()) throw std::invalid_argument("k_hop_propagate: K must be >= 1");
    ad::Var acc = tape.matmul(z, coeffs[0]); // op^0 = I
    ad::Var power = z;
    for (std::size_t k = 1; k < coeffs.size(); ++k) {
        power = tape.matmul_cl(op, power);
        acc = tape.add(acc, tape.matmul(power, coeffs[k]));
    }
    return tape.tanh_(acc);
}

GateResult transport_gate(ad::Tape& tape, ad::Var h_diff, ad::Var h_adv,
                          ad::Var wind_feat, const GateParams& p) {
    ad::Var phi = tape.linear(wind_feat, p.w_phi, p.b_phi);
    ad::Var gate = tape.sigmoid_(
        tape.linear(tape.concat_cols({h_diff, h_adv, phi}), p.w_alpha, p.b_alpha));
    // gate .* H_diff + (1-gate) .* H_adv  ==  H_adv + gate .* (H_diff - H_adv)
    ad::Var h_phys = tape.add(h_adv, tape.mul(gate, tape.sub(h_diff, h_adv)));
    return {h_phys, gate};
}

} // namespace neuroddaf::graphnet
