#include <algorithm>
#include <cmath>
#include <cstdint>
#include <limits>
#include <vector>

#include "otrecon/transport.hpp"

namespace otrecon::transport {

namespace {

struct Atom {
    double x, y, mass;
};

std::vector<Atom> positive_atoms(const DiscreteMeasure& m) {
    std::vector<Atom> atoms;
    for (int j = 0; j < m.grid.height; ++j)
        for (int i = 0; i < m.grid.width; ++i) {
            double v = m.at(i, j);
            if (v < 0.0)
                throw ContractError("exact_transport: marginals must be nonnegative");
            if (v > 0.0) atoms.push_back({m.grid.center_x(i), m.grid.center_y(j), v});
        }
    return atoms;
}

} // namespace

// Transportation problem on the bipartite graph of positive atoms, solved by
// successive shortest paths with Johnson potentials. Costs are rounded to
// integers at scale 1e12 so path comparisons are exact; the returned value
// uses the unrounded costs of the optimal plan.
//
// Potential invariant: sources holding supply always have pot_s = 0 (they are
// the multi-source Dijkstra roots every round), and every residual arc keeps
// a nonnegative reduced cost c + pot(tail) - pot(head).
double exact_transport(const DiscreteMeasure& mu0, const DiscreteMeasure& mu1,
                       const TransportCost& cost) {
    std::vector<Atom> src = positive_atoms(mu0);
    std::vector<Atom> dst = positive_atoms(mu1);
    if (src.size() > 256 || dst.size() > 256)
        throw CapacityError("exact_transport: more than 256 positive atoms per side");
    double total0 = 0.0, total1 = 0.0;
    for (const auto& a : src) total0 += a.mass;
    for (const auto& a : dst) total1 += a.mass;
    if (src.empty() && dst.empty()) return 0.0;
    if (std::abs(total0 - total1) > 1e-9 * std::max(total0, total1))
        throw ContractError("exact_transport: marginal masses differ beyond 1e-9 relative");

    const int ns = static_cast<int>(src.size());
    const int nd = static_cast<int>(dst.size());
    constexpr double SCALE = 1e12;
    constexpr std::int64_t INF = std::numeric_limits<std::int64_t>::max() / 4;

    std::vector<double> cost_real(static_cast<std::size_t>(ns) * nd);
    std::vector<std::int64_t> cost_int(cost_real.size());
    for (int i = 0; i < ns; ++i)
        for (int j = 0; j < nd; ++j) {
            double c = cost(src[static_cast<std::size_t>(i)].x - dst[static_cast<std::size_t>(j)].x,
                            src[static_cast<std::size_t>(i)].y - dst[static_cast<std::size_t>(j)].y);
            cost_real[static_cast<std::size_t>(i) * nd + j] = c;
            cost_int[static_cast<std::size_t>(i) * nd + j] =
                static_cast<std::int64_t>(std::llround(c * SCALE));
        }

    std::vector<double> flow(cost_real.size(), 0.0);
    std::vector<double> supply(static_cast<std::size_t>(ns)), demand(static_cast<std::size_t>(nd));
    for (int i = 0; i < ns; ++i) supply[static_cast<std::size_t>(i)] = src[static_cast<std::size_t>(i)].mass;
    for (int j = 0; j < nd; ++j) demand[static_cast<std::size_t>(j)] = dst[static_cast<std::size_t>(j)].mass;

    std::vector<std::int64_t> pot_s(static_cast<std::size_t>(ns), 0), pot_d(static_cast<std::size_t>(nd), 0);
    const double dust = 1e-15 * std::max(total0, total1);

    std::vector<std::int64_t> dist_s(static_cast<std::size_t>(ns)), dist_d(static_cast<std::size_t>(nd));
    std::vector<int> par_d(static_cast<std::size_t>(nd)); // predecessor source of each sink
    std::vector<int> par_s(static_cast<std::size_t>(ns)); // predecessor sink, or -1 for roots
    std::vector<bool> done_s(static_cast<std::size_t>(ns)), done_d(static_cast<std::size_t>(nd));

    for (;;) {
        bool have_supply = false;
        for (int i = 0; i < ns; ++i)
            if (supply[static_cast<std::size_t>(i)] > dust) have_supply = true;
        bool have_demand = false;
        for (int j = 0; j < nd; ++j)
            if (demand[static_cast<std::size_t>(j)] > dust) have_demand = true;
        if (!have_supply || !have_demand) break;

        std::fill(dist_s.begin(), dist_s.end(), INF);
        std::fill(dist_d.begin(), dist_d.end(), INF);
        std::fill(par_d.begin(), par_d.end(), -1);
        std::fill(par_s.begin(), par_s.end(), -1);
        std::fill(done_s.begin(), done_s.end(), false);
        std::fill(done_d.begin(), done_d.end(), false);
        for (int i = 0; i < ns; ++i)
            if (supply[static_cast<std::size_t>(i)] > dust) dist_s[static_cast<std::size_t>(i)] = 0;

        for (;;) {
            std::int64_t best = INF;
            int bi = -1;
            bool best_is_src = true;
            for (int i = 0; i < ns; ++i)
                if (!done_s[static_cast<std::size_t>(i)] && dist_s[static_cast<std::size_t>(i)] < best) {
                    best = dist_s[static_cast<std::size_t>(i)];
                    bi = i;
                    best_is_src = true;
                }
            for (int j = 0; j < nd; ++j)
                if (!done_d[static_cast<std::size_t>(j)] && dist_d[static_cast<std::size_t>(j)] < best) {
                    best = dist_d[static_cast<std::size_t>(j)];
                    bi = j;
                    best_is_src = false;
                }
            if (bi < 0) break;
            if (best_is_src) {
                done_s[static_cast<std::size_t>(bi)] = true;
                std::int64_t base = dist_s[static_cast<std::size_t>(bi)] + pot_s[static_cast<std::size_t>(bi)];
                for (int j = 0; j < nd; ++j) {
                    if (done_d[static_cast<std::size_t>(j)]) continue;
                    std::int64_t cand = base + cost_int[static_cast<std::size_t>(bi) * nd + j] -
                                        pot_d[static_cast<std::size_t>(j)];
                    if (cand < dist_d[static_cast<std::size_t>(j)]) {
                        dist_d[static_cast<std::size_t>(j)] = cand;
                        par_d[static_cast<std::size_t>(j)] = bi;
                    }
                }
            } else {
                done_d[static_cast<std::size_t>(bi)] = true;
                std::int64_t base = dist_d[static_cast<std::size_t>(bi)] + pot_d[static_cast<std::size_t>(bi)];
                for (int i = 0; i < ns; ++i) {
                    if (done_s[static_cast<std::size_t>(i)]) continue;
                    if (flow[static_cast<std::size_t>(i) * nd + bi] <= 0.0) continue;
                    std::int64_t cand = base - cost_int[static_cast<std::size_t>(i) * nd + bi] -
                                        pot_s[static_cast<std::size_t>(i)];
                    if (cand < dist_s[static_cast<std::size_t>(i)]) {
                        dist_s[static_cast<std::size_t>(i)] = cand;
                        par_s[static_cast<std::size_t>(i)] = bi;
                    }
                }
            }
        }

        int sink = -1;
        std::int64_t best = INF;
        for (int j = 0; j < nd; ++j)
            if (demand[static_cast<std::size_t>(j)] > dust && dist_d[static_cast<std::size_t>(j)] < best) {
                best = dist_d[static_cast<std::size_t>(j)];
                sink = j;
            }
        if (sink < 0)
            throw NumericalBreakdown("exact_transport: no augmenting path despite remaining demand");

        double bottleneck = demand[static_cast<std::size_t>(sink)];
        for (int j = sink;;) {
            int i = par_d[static_cast<std::size_t>(j)];
            if (par_s[static_cast<std::size_t>(i)] < 0) {
                bottleneck = std::min(bottleneck, supply[static_cast<std::size_t>(i)]);
                break;
            }
            int jprev = par_s[static_cast<std::size_t>(i)];
            bottleneck = std::min(bottleneck, flow[static_cast<std::size_t>(i) * nd + jprev]);
            j = jprev;
        }

        demand[static_cast<std::size_t>(sink)] -= bottleneck;
        for (int j = sink;;) {
            int i = par_d[static_cast<std::size_t>(j)];
            flow[static_cast<std::size_t>(i) * nd + j] += bottleneck;
            if (par_s[static_cast<std::size_t>(i)] < 0) {
                supply[static_cast<std::size_t>(i)] -= bottleneck;
                break;
            }
            int jprev = par_s[static_cast<std::size_t>(i)];
            flow[static_cast<std::size_t>(i) * nd + jprev] -= bottleneck;
            j = jprev;
        }

        for (int i = 0; i < ns; ++i)
            if (dist_s[static_cast<std::size_t>(i)] < INF) pot_s[static_cast<std::size_t>(i)] += dist_s[static_cast<std::size_t>(i)];
        for (int j = 0; j < nd; ++j)
            if (dist_d[static_cast<std::size_t>(j)] < INF) pot_d[static_cast<std::size_t>(j)] += dist_d[static_cast<std::size_t>(j)];
    }

    double value = 0.0;
    for (std::size_t k = 0; k < flow.size(); ++k) value += flow[k] * cost_real[k];
    return value;
}

} // namespace otrecon::transport
