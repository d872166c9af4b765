#include "fcn/geometry.hpp"

namespace fcn {

LayerGeom conv_geom(int k, int s, int p) {
  if (k < 1 || s < 1 || p < 0) throw DataError("bad conv geometry");
  return LayerGeom{GeomKind::kConv, k, s, p, 1, 1};
}

LayerGeom pool_geom(int k, int s, int p) {
  if (k < 1 || s < 1 || p < 0) throw DataError("bad pool geometry");
  return LayerGeom{GeomKind::kPool, k, s, p, 1, 1};
}

LayerGeom elementwise_geom() { return LayerGeom{}; }

LayerGeom deconv_geom(int k, int f, int p) {
  if (k < 1 || f < 1 || p < 0) throw DataError("bad deconv geometry");
  return LayerGeom{GeomKind::kDeconv, k, 1, p, f, 1};
}

GeomSummary summarize(const LayerGeom& g) {
  GeomSummary s;
  s.chain.push_back(g);
  if (g.kind == GeomKind::kDeconv) {
    // Measured in input cells a deconv output window spans k/f; its grid
    // step is 1/f of the input grid.
    s.K = Rational(g.k, g.f);
    s.S = Rational(1, g.f);
    s.P = Rational(g.p, g.f);
  } else {
    s.K = Rational(g.k_eff());
    s.S = Rational(g.s);
    s.P = Rational(g.p);
  }
  return s;
}

GeomSummary compose(const GeomSummary& outer, const GeomSummary& inner) {
  GeomSummary out;
  out.K = inner.K + (outer.K - Rational(1)) * inner.S;
  out.S = outer.S * inner.S;
  out.P = inner.P + outer.P * inner.S;
  out.chain = inner.chain;
  out.chain.insert(out.chain.end(), outer.chain.begin(), outer.chain.end());
  return out;
}

int layer_output_extent(const LayerGeom& g, int n) {
  if (n < 1) throw DataError("nonpositive input extent");
  if (g.kind == GeomKind::kDeconv) return (n - 1) * g.f + g.k - 2 * g.p;
  int padded = n + 2 * g.p;
  if (padded < g.k_eff())
    throw DataError("window of extent " + std::to_string(g.k_eff()) +
                    " does not fit input extent " + std::to_string(n) +
                    " with padding " + std::to_string(g.p));
  return (padded - g.k_eff()) / g.s + 1;
}

int output_extent(const GeomSummary& s, int n) {
  for (const LayerGeom& g : s.chain) n = layer_output_extent(g, n);
  return n;
}

}  // namespace fcn
