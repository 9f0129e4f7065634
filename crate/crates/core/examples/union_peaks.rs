//! Merges peak lists from several sections into one.

use ionmorph::peaks::{union_peaklists, PeakList};

fn main() {
    let a = PeakList::from_mzs(vec![200.0, 300.0, 450.0], "section-a");
    let b = PeakList::from_mzs(vec![200.0008, 300.0009, 600.0], "section-b");
    let c = PeakList::from_mzs(vec![199.9995, 750.0], "section-c");

    for merge_ppm in [1.0, 10.0] {
        let merged = union_peaklists(&[a.clone(), b.clone(), c.clone()], merge_ppm);
        println!("merge_ppm {merge_ppm}: {} peaks", merged.len());
        print!("{}", merged.to_csv());
    }
}
