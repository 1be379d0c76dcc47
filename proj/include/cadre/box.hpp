#pragma once

namespace cadre {

// Axis-aligned 2D box in pixel coordinates, (xmin, ymin) exclusive-free:
// requires xmin < xmax and ymin < ymax wherever area matters.
struct Box {
    double x0 = 0.0;
    double y0 = 0.0;
    double x1 = 0.0;
    double y1 = 0.0;

    double width() const { return x1 - x0; }
    double height() const { return y1 - y0; }
    double cx() const { return 0.5 * (x0 + x1); }
    double cy() const { return 0.5 * (y0 + y1); }
};

} // namespace cadre
