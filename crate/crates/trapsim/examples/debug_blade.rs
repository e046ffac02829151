use trapsim::assembly::build_blade_trap;
use trapsim::grid::Grid3D;
use trapsim::material::rasterize;
use trapsim::solver::{assemble, field_probe, solve, FieldData, SolveSpec};
use trapsim::vec3::Vec3;

fn main() {
    let asm = build_blade_trap();
    let grid = Grid3D::covering(
        Vec3::new(-3.2e-3, -4.1e-3, -3.3e-3),
        Vec3::new(3.2e-3, 4.1e-3, 3.3e-3),
        100e-6,
    );
    let (map, mask) = rasterize(&asm, &grid).unwrap();
    let spec = SolveSpec::rf(&asm);
    let system = assemble(&map, &mask, &spec, None).unwrap();
    let sol = solve(&system, &spec).unwrap();
    println!("iters {} residual {:e}", sol.meta.iterations, sol.meta.final_residual);
    for p in [
        Vec3::ZERO,
        Vec3::new(0.05e-3, 0.0, 0.0),
        Vec3::new(0.0, 0.05e-3, 0.0),
        Vec3::new(0.1e-3, 0.1e-3, 0.0),
        Vec3::new(0.45e-3, 0.0, 0.0),
    ] {
        let e = field_probe(&sol, p).unwrap();
        println!("E({:+.2e},{:+.2e},{:+.2e}) = ({:+.3e}, {:+.3e}, {:+.3e})",
            p.x, p.y, p.z, e[0].re, e[1].re, e[2].re);
    }
    // potential symmetry under 180 rotation
    let FieldData::Real(phi) = &sol.potential else { panic!() };
    let dims = grid.dims;
    let mut worst = 0f64; let mut at = (0,0,0);
    for k in 1..dims[2]-1 { for j in 1..dims[1]-1 { for i in 1..dims[0]-1 {
        let a = phi[grid.idx(i,j,k)];
        let b = phi[grid.idx(dims[0]-1-i, dims[1]-1-j, k)];
        if (a-b).abs() > worst { worst = (a-b).abs(); at = (i,j,k); }
    }}}
    println!("rotation asymmetry {:e} at {:?}", worst, at);
    // phi along z axis near center
    let (i0,j0,k0) = grid.cell_containing(Vec3::ZERO).unwrap();
    println!("phi center {:.6}", phi[grid.idx(i0,j0,k0)]);
    for dk in 0..4 { println!("phi z+{} = {:.6}", dk, phi[grid.idx(i0,j0,k0+dk)]); }
    for di in 0..4 { println!("phi x+{} = {:.6}", di, phi[grid.idx(i0+di,j0,k0)]); }
}
