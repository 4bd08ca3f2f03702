#include <algorithm>
#include <cmath>
#include <map>
#include <numeric>

#include "eqlab/explore.hpp"

namespace eqlab::explore {

std::vector<ParetoPoint> pareto_front(std::span<const ParetoPoint> points)
{
    std::vector<std::size_t> order;
    for (std::size_t i = 0; i < points.size(); ++i)
        if (!std::isnan(points[i].metric) && !std::isnan(points[i].macs))
            order.push_back(i);
    std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) {
        if (points[a].macs != points[b].macs)
            return points[a].macs < points[b].macs;
        return points[a].metric < points[b].metric;
    });
    std::vector<ParetoPoint> front;
    for (auto i : order)
        if (front.empty() || points[i].metric < front.back().metric) {
            front.push_back(points[i]);
            front.back().dominated = false;
        }
    return front;
}

void mark_dominated(std::span<ParetoPoint> points)
{
    const auto front = pareto_front(points);
    std::vector<bool> kept(points.size(), false);
    // match front members back to their first occurrence
    for (const auto& f : front)
        for (std::size_t i = 0; i < points.size(); ++i)
            if (!kept[i] && points[i].macs == f.macs && points[i].metric == f.metric &&
                points[i].model_id == f.model_id) {
                kept[i] = true;
                break;
            }
    for (std::size_t i = 0; i < points.size(); ++i)
        points[i].dominated = !kept[i];
}

std::optional<ParetoPoint> budget_optimal(std::span<const ParetoPoint> points, double budget)
{
    std::optional<ParetoPoint> best;
    for (const auto& p : points) {
        if (std::isnan(p.metric) || !(p.macs <= budget))
            continue;
        if (!best || p.metric < best->metric || (p.metric == best->metric && p.macs < best->macs))
            best = p;
    }
    return best;
}

std::vector<ParetoPoint> mean_points(const ResultSet& rs, const std::string& scenario, double snr_db, bool use_ber)
{
    struct Acc {
        double macs = 0.0;
        double sum = 0.0;
        std::size_t n = 0;
    };
    std::map<std::string, Acc> acc;
    for (const auto& r : rs.rows) {
        if (r.cell.scenario != scenario || r.cell.snr_db != snr_db || r.failed)
            continue;
        auto& a = acc[r.cell.model_id];
        a.macs = r.macs_per_symbol;
        a.sum += use_ber ? r.ber : r.ser;
        ++a.n;
    }
    std::vector<ParetoPoint> pts;
    for (const auto& [id, a] : acc)
        pts.push_back({a.macs, a.sum / static_cast<double>(a.n), id, false});
    return pts;
}

} // namespace eqlab::explore
