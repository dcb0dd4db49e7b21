use superform_core::algebras::{check_membership, mb_eth_coefficients, realize_mb, Algebra};
use superform_core::grassmann::{parse_poly, Poly, System};
use superform_core::supervector::grading_field;

#[test]
fn probe_mb_graph_facts() {
    let sys = System::Mb38;
    let z = grading_field(sys);
    let eth = mb_eth_coefficients(&z);
    println!("r̄_Odd(Z) = ({}, {})", eth[0].render(sys), eth[1].render(sys));
    let back = realize_mb(&eth).expect("Z roundtrip");
    println!("roundtrip == Z: {}", back == z);

    let vth1 = parse_poly("vth{1}", sys).unwrap();
    match realize_mb(&[vth1, Poly::zero()]) {
        Ok(x) => {
            let v = check_membership(Algebra::Mb38, &x)
                .map(|v| v.is_member())
                .unwrap_or(false);
            println!("(vth1, 0): realized, member={v}");
            println!("  x = {}", x.render());
        }
        Err(e) => println!("(vth1, 0): rejected: {e}"),
    }

    // candidate rejection witnesses at various degrees
    for (name, p) in [
        ("u1^2", parse_poly("u1*u1", sys).unwrap()),
        ("u1", parse_poly("u1", sys).unwrap()),
        ("th{1,1}*th{1,2}*vth{1}", parse_poly("th{1,1}*th{1,2}*vth{1}", sys).unwrap()),
    ] {
        match realize_mb(&[p, Poly::zero()]) {
            Ok(_) => println!("({name}, 0): realized"),
            Err(e) => println!("({name}, 0): rejected: {e}"),
        }
    }
}
