#include "stylebias/fmap.hpp"

namespace stylebias {

Fmap resize_bilinear(const Fmap& src, int out_h, int out_w) {
    Fmap dst(src.c, out_h, out_w);
    const float sy = static_cast<float>(src.h) / out_h;
    const float sx = static_cast<float>(src.w) / out_w;
    for (int c = 0; c < src.c; ++c) {
        const float* sp = src.channel(c);
        float* dp = dst.channel(c);
        for (int y = 0; y < out_h; ++y) {
            const float fy = (y + 0.5f) * sy - 0.5f;
            int y0 = static_cast<int>(std::floor(fy));
            const float wy = fy - y0;
            int y1 = std::min(y0 + 1, src.h - 1);
            y0 = std::clamp(y0, 0, src.h - 1);
            for (int x = 0; x < out_w; ++x) {
                const float fx = (x + 0.5f) * sx - 0.5f;
                int x0 = static_cast<int>(std::floor(fx));
                const float wx = fx - x0;
                int x1 = std::min(x0 + 1, src.w - 1);
                x0 = std::clamp(x0, 0, src.w - 1);
                const float a = sp[y0 * src.w + x0] * (1 - wx) + sp[y0 * src.w + x1] * wx;
                const float b = sp[y1 * src.w + x0] * (1 - wx) + sp[y1 * src.w + x1] * wx;
                dp[y * out_w + x] = a * (1 - wy) + b * wy;
            }
        }
    }
    return dst;
}

}  // namespace stylebias
