#include "core/image.hpp"

#include <algorithm>
#include <cmath>

#include "core/errors.hpp"

namespace chromo {

Image downsample2(const Image& im) {
    if (im.h % 2 || im.w % 2) throw DataError("downsample2: odd image size");
    Image out(im.h / 2, im.w / 2);
    for (int y = 0; y < out.h; ++y)
        for (int x = 0; x < out.w; ++x)
            out.at(y, x) = 0.25f * (im.at(2 * y, 2 * x) + im.at(2 * y, 2 * x + 1) +
                                    im.at(2 * y + 1, 2 * x) + im.at(2 * y + 1, 2 * x + 1));
    return out;
}

Image downsample_to(const Image& im, int oh, int ow) {
    Image cur = im;
    while (cur.h > oh || cur.w > ow) {
        if (cur.h % 2 || cur.w % 2 || cur.h < oh || cur.w < ow)
            throw DataError("downsample_to: non power-of-2 ratio");
        cur = downsample2(cur);
    }
    if (cur.h != oh || cur.w != ow) throw DataError("downsample_to: non power-of-2 ratio");
    return cur;
}

Image resize_bilinear(const Image& im, int oh, int ow) {
    Image out(oh, ow);
    const float sy = oh > 1 ? static_cast<float>(im.h - 1) / static_cast<float>(oh - 1) : 0.f;
    const float sx = ow > 1 ? static_cast<float>(im.w - 1) / static_cast<float>(ow - 1) : 0.f;
    for (int y = 0; y < oh; ++y) {
        const float yf = static_cast<float>(y) * sy;
        const int y0 = std::min(static_cast<int>(yf), im.h - 1);
        const int y1 = std::min(y0 + 1, im.h - 1);
        const float fy = yf - static_cast<float>(y0);
        for (int x = 0; x < ow; ++x) {
            const float xf = static_cast<float>(x) * sx;
            const int x0 = std::min(static_cast<int>(xf), im.w - 1);
            const int x1 = std::min(x0 + 1, im.w - 1);
            const float fx = xf - static_cast<float>(x0);
            out.at(y, x) = (1.f - fy) * ((1.f - fx) * im.at(y0, x0) + fx * im.at(y0, x1)) +
                           fy * ((1.f - fx) * im.at(y1, x0) + fx * im.at(y1, x1));
        }
    }
    return out;
}

}  // namespace chromo
