use trapsim::assembly::*;
use trapsim::csg::CsgShape;
use trapsim::grid::Grid3D;
use trapsim::material::rasterize;
use trapsim::solver::*;
use trapsim::vec3::Vec3;

fn main() {
    let mut asm = TrapAssembly {
        kind: TrapKind::Custom,
        electrodes: Vec::new(),
        dielectrics: Vec::new(),
        drive: DriveParams { voltage: 200.0, frequency: 10.0e6 },
        ion: IonParams { mass_amu: 40.0, charge_e: 1.0 },
        scale: 1.0,
        symmetry_axis: 2,
        nominal_center: Vec3::ZERO,
    };
    asm.electrodes.push(Electrode {
        shape: CsgShape::cuboid(Vec3::new(0.0, -0.1e-3, 0.0), Vec3::new(3e-3, 0.1e-3, 3e-3)),
        role: ElectrodeRole::Ground, label: "b".into(),
    });
    asm.electrodes.push(Electrode {
        shape: CsgShape::cuboid(Vec3::new(0.0, 1.1e-3, 0.0), Vec3::new(3e-3, 0.1e-3, 3e-3)),
        role: ElectrodeRole::Rf, label: "t".into(),
    });
    let grid = Grid3D::covering(Vec3::new(-4e-3,-1.2e-3,-4e-3), Vec3::new(4e-3,2.2e-3,4e-3), 50e-6);
    let (map, mask) = rasterize(&asm, &grid).unwrap();
    let spec = SolveSpec::rf(&asm);
    let system = assemble(&map, &mask, &spec, None).unwrap();
    let sol = solve(&system, &spec).unwrap();
    println!("iters {} res {:e}", sol.meta.iterations, sol.meta.final_residual);
    let f = max_flux_imbalance(&system, &sol);
    println!("flux: solver-norm {:e}, local-rel {:e}", f.solver_normalized, f.local_relative);
}
