#pragma once

#include "lpreg/types.hpp"

namespace lpreg {

inline Vec2 apply_transform(Vec2 p, const Similarity& t) {
  return {t.s * p.x + t.tx, t.s * p.y + t.ty};
}

inline Vec2 apply_transform(Vec2 p, const TransformState& state) {
  return apply_transform(p, state.pose);
}

/// Composition: apply `first`, then `second`.
inline Similarity compose(const Similarity& second, const Similarity& first) {
  return {second.s * first.tx + second.tx, second.s * first.ty + second.ty,
          second.s * first.s};
}

inline Similarity inverse(const Similarity& t) {
  return {-t.tx / t.s, -t.ty / t.s, 1.0 / t.s};
}

}  // namespace lpreg
