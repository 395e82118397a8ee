#include "magdc/autodiff.hpp"

#include <Eigen/Core>

#include <cmath>
#include <sstream>
#include <stdexcept>

#include "magdc/fft.hpp"

namespace magdc {

using RowMatrix = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
using MatrixMap = Eigen::Map<RowMatrix>;
using ConstMatrixMap = Eigen::Map<const RowMatrix>;

std::size_t shape_numel(std::span<const std::size_t> shape) {
    std::size_t n = 1;
    for (std::size_t d : shape)
        n *= d;
    return n;
}

Tensor::Tensor(std::vector<std::size_t> shape_, double fill)
    : shape(std::move(shape_)), data(shape_numel(shape), fill) {}

Tensor::Tensor(std::vector<std::size_t> shape_, std::span<const double> data_)
    : shape(std::move(shape_)), data(data_.begin(), data_.end()) {
    if (data.size() != shape_numel(shape))
        throw ShapeError("tensor data length " + std::to_string(data.size()) + " does not match shape " +
                         shape_string());
}

std::string Tensor::shape_string() const {
    std::ostringstream os;
    os << '(';
    for (std::size_t i = 0; i < shape.size(); ++i)
        os << (i ? ", " : "") << shape[i];
    os << ')';
    return os.str();
}

Tensor image_tensor(const RealImage& img) {
    return Tensor({1, img.height(), img.width()}, img.data());
}

Tensor complex_tensor(std::span<const Complex> values, std::size_t height, std::size_t width) {
    if (values.size() != height * width)
        throw ShapeError("complex_tensor: value count does not match plane size");
    Tensor t({2, height, width});
    const std::size_t plane = height * width;
    for (std::size_t i = 0; i < plane; ++i) {
        t.data[i] = values[i].real();
        t.data[plane + i] = values[i].imag();
    }
    return t;
}

RealImage tensor_image(const Tensor& t) {
    if (t.shape.size() != 3 || t.shape[0] != 1)
        throw ShapeError("tensor_image: expected (1, H, W), got " + t.shape_string());
    return RealImage(t.shape[1], t.shape[2], std::vector<double>(t.data.begin(), t.data.end()));
}

KSpaceGrid tensor_kspace(const Tensor& t) {
    if (t.shape.size() != 3 || t.shape[0] != 2)
        throw ShapeError("tensor_kspace: expected (2, H, W), got " + t.shape_string());
    const std::size_t plane = t.shape[1] * t.shape[2];
    std::vector<Complex> values(plane);
    for (std::size_t i = 0; i < plane; ++i)
        values[i] = Complex(t.data[i], t.data[plane + i]);
    return KSpaceGrid(t.shape[1], t.shape[2], std::move(values));
}

const Tensor& Var::value() const { return graph_->value(id_); }
const Tensor& Var::grad() const { return graph_->grad(id_); }

Var Graph::constant(Tensor value) {
    nodes_.push_back(Node{std::move(value), {}, {}, {}, false});
    return Var(this, nodes_.size() - 1);
}

Var Graph::parameter(Tensor value) {
    nodes_.push_back(Node{std::move(value), {}, {}, {}, true});
    return Var(this, nodes_.size() - 1);
}

Var Graph::make(Tensor value, std::vector<Var> parents, BackwardFn backward) {
    bool needs = false;
    for (const Var& p : parents) {
        if (&p.graph() != this)
            throw std::invalid_argument("graph: operand belongs to a different graph");
        needs = needs || nodes_.at(p.id()).needs_grad;
    }
    nodes_.push_back(Node{std::move(value), {}, std::move(parents), needs ? std::move(backward) : BackwardFn{}, needs});
    return Var(this, nodes_.size() - 1);
}

Tensor& Graph::grad_buffer(std::size_t id) {
    Node& n = nodes_.at(id);
    if (n.grad.data.size() != n.value.data.size())
        n.grad = Tensor(n.value.shape, 0.0);
    return n.grad;
}

void Graph::backward(Var loss) {
    if (&loss.graph() != this)
        throw std::invalid_argument("backward: loss belongs to a different graph");
    const Node& root = nodes_.at(loss.id());
    if (!root.value.is_scalar())
        throw std::invalid_argument("backward: loss must be a scalar node, got shape " + root.value.shape_string());
    for (Node& n : nodes_)
        if (n.needs_grad)
            n.grad = Tensor(n.value.shape, 0.0);
    if (!root.needs_grad)
        return;
    nodes_[loss.id()].grad.data[0] = 1.0;
    for (std::size_t i = loss.id() + 1; i-- > 0;) {
        if (nodes_[i].backward)
            nodes_[i].backward(*this, i);
    }
}

namespace {

void require_shape(const Tensor& t, std::initializer_list<std::size_t> expected, const char* operand) {
    if (!std::equal(t.shape.begin(), t.shape.end(), expected.begin(), expected.end())) {
        Tensor e(std::vector<std::size_t>(expected), 0.0);
        throw ShapeError(std::string(operand) + ": expected shape " + e.shape_string() + ", got " +
                         t.shape_string());
    }
}

void require_plane(const Tensor& t, std::size_t channels, const char* operand) {
    if (t.shape.size() != 3 || t.shape[0] != channels)
        throw ShapeError(std::string(operand) + ": expected (" + std::to_string(channels) + ", H, W), got " +
                         t.shape_string());
}

// Columns of 3x3 neighbourhoods: row (c*9 + ky*3 + kx), column (y*W + x), zero outside the image.
void im2col(const double* x, std::size_t channels, std::size_t height, std::size_t width, double* cols) {
    const std::size_t plane = height * width;
    for (std::size_t c = 0; c < channels; ++c) {
        for (std::size_t ky = 0; ky < 3; ++ky) {
            for (std::size_t kx = 0; kx < 3; ++kx) {
                double* dst = cols + ((c * 9) + ky * 3 + kx) * plane;
                const double* src = x + c * plane;
                for (std::size_t y = 0; y < height; ++y) {
                    const long sy = static_cast<long>(y) + static_cast<long>(ky) - 1;
                    double* row = dst + y * width;
                    if (sy < 0 || sy >= static_cast<long>(height)) {
                        std::fill_n(row, width, 0.0);
                        continue;
                    }
                    const double* srow = src + static_cast<std::size_t>(sy) * width;
                    for (std::size_t xx = 0; xx < width; ++xx) {
                        const long sx = static_cast<long>(xx) + static_cast<long>(kx) - 1;
                        row[xx] = (sx < 0 || sx >= static_cast<long>(width)) ? 0.0 : srow[sx];
                    }
                }
            }
        }
    }
}

void col2im_add(const double* cols, std::size_t channels, std::size_t height, std::size_t width, double* x) {
    const std::size_t plane = height * width;
    for (std::size_t c = 0; c < channels; ++c) {
        for (std::size_t ky = 0; ky < 3; ++ky) {
            for (std::size_t kx = 0; kx < 3; ++kx) {
                const double* src = cols + ((c * 9) + ky * 3 + kx) * plane;
                double* dst = x + c * plane;
                for (std::size_t y = 0; y < height; ++y) {
                    const long sy = static_cast<long>(y) + static_cast<long>(ky) - 1;
                    if (sy < 0 || sy >= static_cast<long>(height))
                        continue;
                    const double* row = src + y * width;
                    double* drow = dst + static_cast<std::size_t>(sy) * width;
                    for (std::size_t xx = 0; xx < width; ++xx) {
                        const long sx = static_cast<long>(xx) + static_cast<long>(kx) - 1;
                        if (sx >= 0 && sx < static_cast<long>(width))
                            drow[sx] += row[xx];
                    }
                }
            }
        }
    }
}

}  // namespace

Var conv2d(Var x, Var weight, Var bias) {
    const Tensor& xv = x.value();
    const Tensor& wv = weight.value();
    require_plane(xv, xv.shape.empty() ? 0 : xv.shape[0], "conv2d input");
    const std::size_t cin = xv.shape[0];
    const std::size_t height = xv.shape[1];
    const std::size_t width = xv.shape[2];
    if (wv.shape.size() != 4)
        throw ShapeError("conv2d weight: expected (Cout, " + std::to_string(cin) + ", 3, 3), got " + wv.shape_string());
    const std::size_t cout = wv.shape[0];
    require_shape(wv, {cout, cin, 3, 3}, "conv2d weight");
    require_shape(bias.value(), {cout}, "conv2d bias");

    const std::size_t plane = height * width;
    const std::size_t k = cin * 9;
    AlignedBuffer cols(k * plane);
    im2col(xv.data.data(), cin, height, width, cols.data());

    Tensor out({cout, height, width});
    MatrixMap o(out.data.data(), static_cast<Eigen::Index>(cout), static_cast<Eigen::Index>(plane));
    o.noalias() = ConstMatrixMap(wv.data.data(), static_cast<Eigen::Index>(cout), static_cast<Eigen::Index>(k)) *
                  ConstMatrixMap(cols.data(), static_cast<Eigen::Index>(k), static_cast<Eigen::Index>(plane));
    const Tensor& bv = bias.value();
    for (std::size_t c = 0; c < cout; ++c)
        o.row(static_cast<Eigen::Index>(c)).array() += bv.data[c];

    return x.graph().make(std::move(out), {x, weight, bias}, [cin, cout, height, width](Graph& g, std::size_t self) {
        const auto& ps = g.parents(self);
        const Var xin = ps[0], w = ps[1], b = ps[2];
        const std::size_t plane = height * width;
        const std::size_t k = cin * 9;
        const auto ci = static_cast<Eigen::Index>(cout);
        const auto ki = static_cast<Eigen::Index>(k);
        const auto pi = static_cast<Eigen::Index>(plane);
        ConstMatrixMap gout(g.grad(self).data.data(), ci, pi);
        if (g.needs_grad(b.id())) {
            Tensor& gb = g.grad_buffer(b.id());
            for (std::size_t c = 0; c < cout; ++c)
                gb.data[c] += gout.row(static_cast<Eigen::Index>(c)).sum();
        }
        const bool need_w = g.needs_grad(w.id());
        const bool need_x = g.needs_grad(xin.id());
        if (!need_w && !need_x)
            return;
        AlignedBuffer cols(k * plane);
        if (need_w) {
            im2col(g.value(xin.id()).data.data(), cin, height, width, cols.data());
            MatrixMap gw(g.grad_buffer(w.id()).data.data(), ci, ki);
            gw.noalias() += gout * ConstMatrixMap(cols.data(), ki, pi).transpose();
        }
        if (need_x) {
            MatrixMap gcols(cols.data(), ki, pi);
            gcols.noalias() = ConstMatrixMap(g.value(w.id()).data.data(), ci, ki).transpose() * gout;
            col2im_add(cols.data(), cin, height, width, g.grad_buffer(xin.id()).data.data());
        }
    });
}

Var relu(Var x) {
    Tensor out = x.value();
    for (double& v : out.data)
        v = v > 0.0 ? v : 0.0;
    return x.graph().make(std::move(out), {x}, [](Graph& g, std::size_t self) {
        const Var in = g.parents(self)[0];
        const Tensor& xv = g.value(in.id());
        const Tensor& go = g.grad(self);
        Tensor& gi = g.grad_buffer(in.id());
        for (std::size_t i = 0; i < go.data.size(); ++i)
            if (xv.data[i] > 0.0)
                gi.data[i] += go.data[i];
    });
}

Var add(Var a, Var b) {
    if (a.value().shape != b.value().shape)
        throw ShapeError("add: second operand expected shape " + a.value().shape_string() + ", got " +
                         b.value().shape_string());
    Tensor out = a.value();
    for (std::size_t i = 0; i < out.data.size(); ++i)
        out.data[i] += b.value().data[i];
    return a.graph().make(std::move(out), {a, b}, [](Graph& g, std::size_t self) {
        const Tensor& go = g.grad(self);
        for (const Var& p : g.parents(self)) {
            if (!g.needs_grad(p.id()))
                continue;
            Tensor& gp = g.grad_buffer(p.id());
            for (std::size_t i = 0; i < go.data.size(); ++i)
                gp.data[i] += go.data[i];
        }
    });
}

Var mae(Var a, Var b) {
    const Tensor& av = a.value();
    const Tensor& bv = b.value();
    if (av.shape != bv.shape)
        throw ShapeError("mae: target expected shape " + av.shape_string() + ", got " + bv.shape_string());
    if (av.data.empty())
        throw ShapeError("mae: empty operands");
    double s = 0.0;
    for (std::size_t i = 0; i < av.data.size(); ++i)
        s += std::abs(av.data[i] - bv.data[i]);
    const double n = static_cast<double>(av.data.size());
    return a.graph().make(Tensor::scalar(s / n), {a, b}, [n](Graph& g, std::size_t self) {
        const Var pa = g.parents(self)[0], pb = g.parents(self)[1];
        const Tensor& av = g.value(pa.id());
        const Tensor& bv = g.value(pb.id());
        const double scale = g.grad(self).data[0] / n;
        const bool need_a = g.needs_grad(pa.id());
        const bool need_b = g.needs_grad(pb.id());
        for (std::size_t i = 0; i < av.data.size(); ++i) {
            const double d = av.data[i] - bv.data[i];
            const double sg = d > 0.0 ? 1.0 : (d < 0.0 ? -1.0 : 0.0);
            if (need_a)
                g.grad_buffer(pa.id()).data[i] += scale * sg;
            if (need_b)
                g.grad_buffer(pb.id()).data[i] -= scale * sg;
        }
    });
}

Var weighted_sum(Var x, const Tensor& weights) {
    if (x.value().shape != weights.shape)
        throw ShapeError("weighted_sum: weights expected shape " + x.value().shape_string() + ", got " +
                         weights.shape_string());
    double s = 0.0;
    for (std::size_t i = 0; i < weights.data.size(); ++i)
        s += x.value().data[i] * weights.data[i];
    return x.graph().make(Tensor::scalar(s), {x}, [weights](Graph& g, std::size_t self) {
        const Var in = g.parents(self)[0];
        const double go = g.grad(self).data[0];
        Tensor& gi = g.grad_buffer(in.id());
        for (std::size_t i = 0; i < weights.data.size(); ++i)
            gi.data[i] += go * weights.data[i];
    });
}

Var lift_complex(Var x) {
    const Tensor& xv = x.value();
    require_plane(xv, 1, "lift_complex input");
    Tensor out({2, xv.shape[1], xv.shape[2]});
    std::copy(xv.data.begin(), xv.data.end(), out.data.begin());
    return x.graph().make(std::move(out), {x}, [](Graph& g, std::size_t self) {
        const Var in = g.parents(self)[0];
        const Tensor& go = g.grad(self);
        Tensor& gi = g.grad_buffer(in.id());
        for (std::size_t i = 0; i < gi.data.size(); ++i)
            gi.data[i] += go.data[i];
    });
}

namespace {

Tensor transform_plane(const Tensor& t, int sign) {
    const std::size_t height = t.shape[1];
    const std::size_t width = t.shape[2];
    const std::size_t plane = height * width;
    std::vector<Complex> values(plane);
    for (std::size_t i = 0; i < plane; ++i)
        values[i] = Complex(t.data[i], t.data[plane + i]);
    fft2_centered_inplace(values, height, width, sign);
    return complex_tensor(values, height, width);
}

// A unitary map's adjoint is its inverse, so each direction backpropagates through the other.
Var centered_transform(Var x, int sign) {
    require_plane(x.value(), 2, sign < 0 ? "fft2c input" : "ifft2c input");
    return x.graph().make(transform_plane(x.value(), sign), {x}, [sign](Graph& g, std::size_t self) {
        const Var in = g.parents(self)[0];
        const Tensor back = transform_plane(g.grad(self), -sign);
        Tensor& gi = g.grad_buffer(in.id());
        for (std::size_t i = 0; i < gi.data.size(); ++i)
            gi.data[i] += back.data[i];
    });
}

}  // namespace

Var fft2c(Var x) { return centered_transform(x, -1); }
Var ifft2c(Var x) { return centered_transform(x, +1); }

Var complex_abs(Var x) {
    const Tensor& xv = x.value();
    require_plane(xv, 2, "complex_abs input");
    const std::size_t plane = xv.shape[1] * xv.shape[2];
    Tensor out({1, xv.shape[1], xv.shape[2]});
    for (std::size_t i = 0; i < plane; ++i)
        out.data[i] = std::hypot(xv.data[i], xv.data[plane + i]);
    return x.graph().make(std::move(out), {x}, [plane](Graph& g, std::size_t self) {
        const Var in = g.parents(self)[0];
        const Tensor& xv = g.value(in.id());
        const Tensor& ov = g.value(self);
        const Tensor& go = g.grad(self);
        Tensor& gi = g.grad_buffer(in.id());
        for (std::size_t i = 0; i < plane; ++i) {
            const double r = ov.data[i];
            if (r == 0.0)
                continue;
            gi.data[i] += go.data[i] * xv.data[i] / r;
            gi.data[plane + i] += go.data[i] * xv.data[plane + i] / r;
        }
    });
}

}  // namespace magdc
