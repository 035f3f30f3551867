#pragma once
// Station graph, diffusion/advection transport operators and the transport
// gate. Operator matrices are plain data; the k-hop propagation and gate run
// on the autodiff tape.

#include "neuroddaf/tape.hpp"
#include "neuroddaf/tensor.hpp"

#include <string>
#include <vector>

namespace neuroddaf::graphnet {

struct Station {
    std::string id;
    double lat = 0.0; // degrees
    double lon = 0.0; // degrees
};

struct Edge {
    int i = 0;
    int j = 0;
    double distance_km = 0.0;
    double weight = 0.0; // Gaussian kernel of distance
};

// Per-station wind sample. Direction follows the meteorological convention:
// degrees clockwise from north, the direction the wind blows FROM. The flow
// vector (where mass moves) points the opposite way.
struct WindSample {
    double speed = 0.0;       // m/s
    double direction = 0.0;   // degrees, [0, 360)
};

class DynamicGraph {
public:
    DynamicGraph() = default;
    DynamicGraph(std::vector<Station> stations, std::vector<Edge> edges)
        : stations_(std::move(stations)), edges_(std::move(edges)) {}

    int n() const { return static_cast<int>(stations_.size()); }
    const std::vector<Station>& stations() const { return stations_; }
    const std::vector<Edge>& edges() const { return edges_; }

    // wind[t][station]
    void set_wind(std::vector<std::vector<WindSample>> wind) { wind_ = std::move(wind); }
    int time_steps() const { return static_cast<int>(wind_.size()); }
    const std::vector<WindSample>& wind_at(int t) const;

    // Base (distance-kernel) weight matrix, symmetric with zero diagonal.
    Tensor weight_matrix() const;

private:
    std::vector<Station> stations_;
    std::vector<Edge> edges_;
    std::vector<std::vector<WindSample>> wind_;
};

double great_circle_km(const Station& a, const Station& b);

// Edge (i,j) exists iff distance <= cutoff_km; weight = exp(-d^2/scale^2).
DynamicGraph build_graph(const std::vector<Station>& stations,
                         double length_scale_km, double cutoff_km);

// L = Diag(row sums) - W at time t. Symmetric PSD, L*1 = 0.
Tensor laplacian(const DynamicGraph& g, int t);

enum class OperatorMode { learned, theory };

// Wind-aware advection operator. Learned mode: directional-cosine transfer
// matrix, row-normalized; theory mode: its antisymmetrization (M - M^T)/2,
// which is exactly skew-symmetric.
Tensor advection_operator(const DynamicGraph& g, int t, OperatorMode mode);

// N x 3 wind features at time t: (speed, sin(flow angle), cos(flow angle)).
Tensor wind_features(const DynamicGraph& g, int t);

// N x N 0/1 mask: edges plus self-loops.
Tensor adjacency_mask(const DynamicGraph& g);

// Smallest positive eigenvalue of a symmetric PSD matrix (0 if none).
double lambda_min_pos(const Tensor& sym, double zero_tol = 1e-10);
double lambda_max(const Tensor& sym);

// sigma(sum_{k=0}^{K-1} op^k * Z * Theta[k]) with sigma = tanh, op^0 = I.
ad::Var k_hop_propagate(ad::Tape& tape, const Tensor& op, ad::Var z,
                        const std::vector<ad::Var>& coeffs);

struct GateParams {
    ad::Var w_alpha; // (2*d_l + d_wproj) x d_l
    ad::Var b_alpha; // 1 x d_l
    ad::Var w_phi;   // d_w x d_wproj (wind projection)
    ad::Var b_phi;   // 1 x d_wproj
};

struct GateResult {
    ad::Var h_phys;
    ad::Var gate;
};

// gate = sigmoid([H_diff || H_adv || phi(wind)] W_a + b_a);
// H_phys = gate .* H_diff + (1-gate) .* H_adv
GateResult transport_gate(ad::Tape& tape, ad::Var h_diff, ad::Var h_adv,
                          ad::Var wind_feat, const GateParams& p);

} // namespace neuroddaf::graphnet
