#include "jbm/graphs.hpp"

#include <algorithm>
#include <cstdio>
#include <fstream>
#include <sstream>

#include "jbm/errors.hpp"

namespace jbm {

CollabGraph build_collab_graph(const InteractionMatrix& interactions, int64_t num_users,
                               int64_t num_items, int64_t layers) {
    CollabGraph graph;
    graph.num_users = num_users;
    graph.num_items = num_items;
    graph.layers = layers;
    const int64_t n = num_users + num_items;
    std::vector<std::tuple<int32_t, int32_t, float>> trips;
    trips.reserve(static_cast<size_t>(interactions.matrix.nnz()) * 2);
    for (int64_t u = 0; u < num_users; ++u) {
        for (int64_t k = interactions.matrix.indptr[static_cast<size_t>(u)];
             k < interactions.matrix.indptr[static_cast<size_t>(u) + 1]; ++k) {
            const int32_t i = interactions.matrix.indices[static_cast<size_t>(k)];
            trips.emplace_back(static_cast<int32_t>(u), static_cast<int32_t>(num_users + i), 1.0f);
            trips.emplace_back(static_cast<int32_t>(num_users + i), static_cast<int32_t>(u), 1.0f);
        }
    }
    graph.adj = sym_normalize(csr_from_triplets<float>(n, n, std::move(trips)), DegreeMode::CountNonzero);
    return graph;
}

SemanticGraph build_semantic_graph(const MatF& features, Modality modality, int64_t k) {
    const int64_t n = features.rows;
    const int64_t d = features.cols;
    if (k < 1) throw ConfigError("semantic graph requires K >= 1");
    if (k >= n) {
        std::fprintf(stderr, "[jbm] warning: K=%lld >= |I|=%lld; clamping to %lld\n",
                     static_cast<long long>(k), static_cast<long long>(n), static_cast<long long>(n - 1));
        k = n - 1;
    }
    SemanticGraph graph;
    graph.modality = modality;
    graph.k = k;
    graph.topk.resize(static_cast<size_t>(n));

    // L2-normalize rows in double; zero rows keep empty neighbor lists.
    MatD unit(n, d);
    std::vector<bool> nonzero(static_cast<size_t>(n), false);
    for (int64_t r = 0; r < n; ++r) {
        double ss = 0;
        for (int64_t j = 0; j < d; ++j) {
            const double x = static_cast<double>(features(r, j));
            ss += x * x;
        }
        if (ss > 0) {
            nonzero[static_cast<size_t>(r)] = true;
            const double inv = 1.0 / std::sqrt(ss);
            for (int64_t j = 0; j < d; ++j) unit(r, j) = static_cast<double>(features(r, j)) * inv;
        }
    }

    // Blocked cosine rows + per-row top-K (similarity desc, index asc).
    const int64_t block = 512;
    MatD sims;
    std::vector<int32_t> order(static_cast<size_t>(n));
    for (int64_t r0 = 0; r0 < n; r0 += block) {
        const int64_t r1 = std::min(n, r0 + block);
        MatD rows(r1 - r0, d);
        for (int64_t r = r0; r < r1; ++r) std::copy(unit.row(r), unit.row(r) + d, rows.row(r - r0));
        sims = matmul(rows, unit, false, true);  // (r1-r0) x n
        for (int64_t r = r0; r < r1; ++r) {
            if (!nonzero[static_cast<size_t>(r)]) continue;
            const double* s = sims.row(r - r0);
            for (int64_t j = 0; j < n; ++j) order[static_cast<size_t>(j)] = static_cast<int32_t>(j);
            // drop self by swapping it to the tail
            std::swap(order[static_cast<size_t>(r)], order[static_cast<size_t>(n - 1)]);
            const auto better = [s](int32_t a, int32_t b) {
                if (s[a] != s[b]) return s[a] > s[b];
                return a < b;
            };
            std::partial_sort(order.begin(), order.begin() + k, order.end() - 1, better);
            auto& neighbors = graph.topk[static_cast<size_t>(r)];
            neighbors.reserve(static_cast<size_t>(k));
            for (int64_t j = 0; j < k; ++j) {
                const int32_t b = order[static_cast<size_t>(j)];
                const double sim = std::clamp(s[b], -1.0, 1.0);
                neighbors.emplace_back(b, static_cast<float>(sim));
            }
        }
    }

    // Symmetrize by union (cosine is symmetric, so either direction carries
    // the same weight), then normalize with value-sum degrees.
    std::vector<std::tuple<int32_t, int32_t, float>> trips;
    for (int64_t a = 0; a < n; ++a) {
        for (const auto& [b, w] : graph.topk[static_cast<size_t>(a)]) {
            trips.emplace_back(static_cast<int32_t>(a), b, w);
            trips.emplace_back(b, static_cast<int32_t>(a), w);
        }
    }
    // union semantics: duplicates (edge picked by both endpoints, or summed by
    // csr_from_triplets) must collapse to the single cosine value
    std::sort(trips.begin(), trips.end(), [](const auto& x, const auto& y) {
        if (std::get<0>(x) != std::get<0>(y)) return std::get<0>(x) < std::get<0>(y);
        return std::get<1>(x) < std::get<1>(y);
    });
    trips.erase(std::unique(trips.begin(), trips.end(),
                            [](const auto& x, const auto& y) {
                                return std::get<0>(x) == std::get<0>(y) && std::get<1>(x) == std::get<1>(y);
                            }),
                trips.end());
    graph.adj = sym_normalize(csr_from_triplets<float>(n, n, std::move(trips)), DegreeMode::ValueSum);
    return graph;
}

UserAggregator build_user_aggregator(const InteractionMatrix& interactions, int64_t num_users,
                                     int64_t num_items) {
    UserAggregator agg;
    CsrF m = interactions.matrix;  // binary |U| x |I|
    for (int64_t u = 0; u < num_users; ++u) {
        for (int64_t k = m.indptr[static_cast<size_t>(u)]; k < m.indptr[static_cast<size_t>(u) + 1]; ++k) {
            const int32_t i = m.indices[static_cast<size_t>(k)];
            const double du = static_cast<double>(interactions.user_degree[static_cast<size_t>(u)]);
            const double di = static_cast<double>(interactions.item_degree[static_cast<size_t>(i)]);
            m.values[static_cast<size_t>(k)] = static_cast<float>(1.0 / std::sqrt(du * di));
        }
    }
    agg.forward = std::move(m);
    agg.transpose = csr_transpose(agg.forward);
    return agg;
}

void save_semantic_topk(const std::string& path, const SemanticGraph& graph) {
    std::ofstream out(path);
    if (!out) throw FormatError("cannot open for write: " + path);
    for (size_t a = 0; a < graph.topk.size(); ++a)
        for (const auto& [b, w] : graph.topk[a]) out << a << "\t" << b << "\t" << w << "\n";
    if (!out) throw FormatError("write failed: " + path);
}

std::vector<std::vector<std::pair<int32_t, float>>> load_semantic_topk(const std::string& path,
                                                                       int64_t num_items, int64_t k) {
    std::ifstream in(path);
    if (!in) throw FormatError("cannot open: " + path);
    std::vector<std::vector<std::pair<int32_t, float>>> topk(static_cast<size_t>(num_items));
    std::string line;
    int64_t line_no = 0;
    while (std::getline(in, line)) {
        ++line_no;
        if (line.empty()) continue;
        std::istringstream is(line);
        int64_t a, b;
        float w;
        if (!(is >> a >> b >> w) || a < 0 || a >= num_items || b < 0 || b >= num_items)
            throw FormatError(path + ":" + std::to_string(line_no) + ": bad triplet");
        topk[static_cast<size_t>(a)].emplace_back(static_cast<int32_t>(b), w);
        if (static_cast<int64_t>(topk[static_cast<size_t>(a)].size()) > k)
            throw FormatError(path + ":" + std::to_string(line_no) + ": row " + std::to_string(a) +
                              " exceeds K=" + std::to_string(k));
    }
    return topk;
}

}  // namespace jbm
