//! Second-order factorization machine over one-hot (user, item) inputs:
//! `w0 + b_user[u] + b_item[v] + <v_user[u], v_item[v]>`.
//!
//! Layout: `[w0 | b_user (U) | b_item (I) | v_user (U x d) | v_item (I x d)]`.

use super::linalg::{axpy, dot};

#[derive(Clone, Debug, PartialEq)]
pub(crate) struct FmLayout {
    pub d: usize,
    pub num_users: usize,
    pub num_items: usize,
    pub b_user: usize,
    pub b_item: usize,
    pub v_user: usize,
    pub v_item: usize,
    pub len: usize,
}

impl FmLayout {
    pub fn new(num_users: usize, num_items: usize, d: usize) -> Self {
        let b_user = 1;
        let b_item = b_user + num_users;
        let v_user = b_item + num_items;
        let v_item = v_user + num_users * d;
        FmLayout {
            d,
            num_users,
            num_items,
            b_user,
            b_item,
            v_user,
            v_item,
            len: v_item + num_items * d,
        }
    }

    pub fn user_row(&self, u: usize) -> usize {
        self.v_user + u * self.d
    }

    pub fn item_row(&self, v: usize) -> usize {
        self.v_item + v * self.d
    }
}

pub(crate) fn score(p: &[f64], lay: &FmLayout, u: usize, v: usize) -> f64 {
    let d = lay.d;
    let pu = &p[lay.user_row(u)..lay.user_row(u) + d];
    let qv = &p[lay.item_row(v)..lay.item_row(v) + d];
    p[0] + p[lay.b_user + u] + p[lay.b_item + v] + dot(pu, qv)
}

/// Adds `ds * d(score)/d(theta)` into `g`.
pub(crate) fn accumulate_grad(
    p: &[f64],
    lay: &FmLayout,
    u: usize,
    v: usize,
    ds: f64,
    g: &mut [f64],
) {
    let d = lay.d;
    let (ur, vr) = (lay.user_row(u), lay.item_row(v));
    g[0] += ds;
    g[lay.b_user + u] += ds;
    g[lay.b_item + v] += ds;
    axpy(ds, &p[vr..vr + d], &mut g[ur..ur + d]);
    axpy(ds, &p[ur..ur + d], &mut g[vr..vr + d]);
}
