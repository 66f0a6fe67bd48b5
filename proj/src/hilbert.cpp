#include "hfc/hilbert.hpp"

namespace hfc {

namespace {

// Skilling's transpose transforms ("Programming the Hilbert curve",
// AIP Conf. Proc. 707, 2004), specialized to 3 dimensions with b bits
// per axis. The "transpose" form holds the Hilbert index bit-interleaved
// across the three axis words.

void transpose_to_axes(std::uint32_t X[3], int b) {
    std::uint32_t N = std::uint32_t(2) << (b - 1), P, Q, t;
    // Gray decode by H ^ (H/2)
    t = X[2] >> 1;
    for (int i = 2; i > 0; i--) X[i] ^= X[i - 1];
    X[0] ^= t;
    // Undo excess work
    for (Q = 2; Q != N; Q <<= 1) {
        P = Q - 1;
        for (int i = 2; i >= 0; i--) {
            if (X[i] & Q)
                X[0] ^= P;
            else {
                t = (X[0] ^ X[i]) & P;
                X[0] ^= t;
                X[i] ^= t;
            }
        }
    }
}

void axes_to_transpose(std::uint32_t X[3], int b) {
    std::uint32_t M = std::uint32_t(1) << (b - 1), P, Q, t;
    // Inverse undo
    for (Q = M; Q > 1; Q >>= 1) {
        P = Q - 1;
        for (int i = 0; i < 3; i++) {
            if (X[i] & Q)
                X[0] ^= P;
            else {
                t = (X[0] ^ X[i]) & P;
                X[0] ^= t;
                X[i] ^= t;
            }
        }
    }
    // Gray encode
    for (int i = 1; i < 3; i++) X[i] ^= X[i - 1];
    t = 0;
    for (Q = M; Q > 1; Q >>= 1)
        if (X[2] & Q) t ^= Q - 1;
    for (int i = 0; i < 3; i++) X[i] ^= t;
}

std::uint64_t pack_transpose(const std::uint32_t X[3], int b) {
    std::uint64_t h = 0;
    for (int s = b - 1; s >= 0; s--)
        for (int i = 0; i < 3; i++) h = (h << 1) | ((X[i] >> s) & 1u);
    return h;
}

void unpack_transpose(std::uint64_t h, int b, std::uint32_t X[3]) {
    X[0] = X[1] = X[2] = 0;
    for (int s = b - 1; s >= 0; s--)
        for (int i = 0; i < 3; i++)
            X[i] = (X[i] << 1) | std::uint32_t((h >> (3 * s + (2 - i))) & 1u);
}

}  // namespace

HilbertCurve::HilbertCurve(int order) : order_(order) {
    if (order < 1 || order > 10)
        throw config_error("hilbert order must be in [1, 10], got " + std::to_string(order));
    side_ = 1 << order;
    total_ = std::uint64_t(side_) * side_ * side_;
}

Coord3 HilbertCurve::index_to_coord(std::uint64_t h) const {
    if (h >= total_)
        throw bounds_error("hilbert index " + std::to_string(h) + " out of range [0, " +
                           std::to_string(total_) + ")");
    std::uint32_t X[3];
    unpack_transpose(h, order_, X);
    transpose_to_axes(X, order_);
    return {int(X[0]), int(X[1]), int(X[2])};
}

std::uint64_t HilbertCurve::coord_to_index(int x, int y, int z) const {
    if (!contains(x, y, z))
        throw bounds_error("coordinate (" + std::to_string(x) + "," + std::to_string(y) + "," +
                           std::to_string(z) + ") outside cube of side " + std::to_string(side_));
    std::uint32_t X[3] = {std::uint32_t(x), std::uint32_t(y), std::uint32_t(z)};
    axes_to_transpose(X, order_);
    return pack_transpose(X, order_);
}

}  // namespace hfc
