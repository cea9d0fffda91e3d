#ifndef ISAC_GRADTAPE_HPP
#define ISAC_GRADTAPE_HPP

#include <Eigen/Dense>
#include <complex>
#include <functional>
#include <optional>
#include <vector>

namespace isac::gt {

using Mat = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;

/// Dense row-major 2-D real tensor; scalars are 1x1.
struct Tensor {
    int rows = 0;
    int cols = 0;
    std::vector<double> data;

    Tensor() = default;
    Tensor(int r, int c) : rows(r), cols(c), data(static_cast<size_t>(r) * static_cast<size_t>(c), 0.0) {}

    static Tensor zeros(int r, int c) { return Tensor(r, c); }
    static Tensor full(int r, int c, double v);
    static Tensor scalar(double v);
    static Tensor from(const Eigen::MatrixXd& m);

    int size() const { return rows * cols; }
    double& operator()(int i, int j) { return data[static_cast<size_t>(i) * cols + j]; }
    double operator()(int i, int j) const { return data[static_cast<size_t>(i) * cols + j]; }

    Eigen::Map<Mat> map() { return {data.data(), rows, cols}; }
    Eigen::Map<const Mat> map() const { return {data.data(), rows, cols}; }
    Eigen::MatrixXd eigen() const { return map(); }
};

using Id = int;

/// Reverse-mode tape. Nodes are recorded in topological (program) order;
/// backward visits them exactly once in reverse. One tape per training
/// iteration; tapes are not shared across threads.
class Tape {
public:
    /// Differentiable leaf.
    Id input(Tensor v);
    /// Non-differentiable leaf; subgraphs of constants record no backward work.
    Id constant(Tensor v);

    const Tensor& value(Id id) const { return nodes_[static_cast<size_t>(id)].value; }
    bool requires_grad(Id id) const { return nodes_[static_cast<size_t>(id)].requires_grad; }

    // elementwise
    Id add(Id a, Id b);
    Id sub(Id a, Id b);
    Id mul(Id a, Id b);
    Id scale(Id a, double c);
    Id add_const(Id a, Tensor c);
    Id square(Id a);
    Id pow_const(Id a, double p); // requires positive entries
    Id relu(Id a);
    Id sigmoid(Id a);
    Id tanh_(Id a);
    Id log_(Id a);
    Id clamp_min(Id a, double lo);
    /// out = a .* mask with mask either same-shape or a 1 x cols row vector.
    Id elementwise_mask(Id a, Tensor mask);
    /// Complex magnitude of a paired-real value; subgradient 0 at 0.
    Id cabs(Id re, Id im);

    // structural
    Id matmul(Id a, Id b);
    Id transpose(Id a);
    Id concat_rows(Id a, Id b);
    Id concat_cols(Id a, Id b);
    Id slice_rows(Id a, int r0, int r1); // half-open [r0, r1)
    Id slice_cols(Id a, int c0, int c1);

    // reductions and broadcasts
    Id sum(Id a);
    Id mean(Id a);
    Id row_sum(Id a);            // n x m -> n x 1
    Id smul(Id a, Id s);         // broadcast multiply by a 1x1 node
    Id row_scale(Id a, Id v);    // out[i,j] = a[i,j] * v[i], v is n x 1
    Id softmax_rows(Id a);

    /// Solves (S + eps I) X = C with eps = ridge_rel * trace(S) / n. The
    /// backward pass solves against the transpose and differentiates the
    /// trace-dependent ridge exactly. Throws on a singular system.
    Id linear_solve(Id s, Id c, double ridge_rel);

    /// Reverse sweep from a scalar loss; gradients of earlier backward calls
    /// are discarded.
    void backward(Id loss);
    /// Gradient of the last backward target; zeros for off-path nodes.
    Tensor grad(Id id) const;

    size_t size() const { return nodes_.size(); }

private:
    struct Node {
        Tensor value;
        bool requires_grad = false;
        std::function<void(Tape&, const Tensor&)> back;
    };
    std::vector<Node> nodes_;
    std::vector<std::optional<Tensor>> grads_;

    Id push(Tensor v, bool rg, std::function<void(Tape&, const Tensor&)> back);
    void accum(Id id, const Mat& g);
    friend struct TapeAccum;
};

/// Complex value as a pair of real nodes. All complex arithmetic is composed
/// from real primitives, so gradients are plain real gradients of a real loss.
struct CVar {
    Id re = -1;
    Id im = -1;
};

CVar c_input(Tape& t, const Eigen::MatrixXcd& m);
CVar c_constant(Tape& t, const Eigen::MatrixXcd& m);
Eigen::MatrixXcd c_value(const Tape& t, CVar a);

CVar c_add(Tape& t, CVar a, CVar b);
CVar c_sub(Tape& t, CVar a, CVar b);
CVar c_conj(Tape& t, CVar a);
CVar c_transpose(Tape& t, CVar a);
CVar c_matmul(Tape& t, CVar a, CVar b);
CVar c_mul(Tape& t, CVar a, CVar b);       // elementwise
CVar c_row_scale(Tape& t, CVar m, CVar v); // row-broadcast complex multiply
CVar c_smul(Tape& t, CVar a, Id s);        // real 1x1 broadcast
CVar c_scale(Tape& t, CVar a, double c);   // real constant scale
Id c_abs(Tape& t, CVar a);
Id c_norm2(Tape& t, CVar a);               // sum_ij |a_ij|^2

/// Complex linear solve through the real block embedding
/// [[S_re, -S_im], [S_im, S_re]]; the block-level ridge equals the
/// complex-level ridge ridge_rel * trace(S) / n exactly.
CVar c_solve(Tape& t, CVar s, CVar c, double ridge_rel);

} // namespace isac::gt

#endif
