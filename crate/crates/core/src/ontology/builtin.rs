use super::{
    AttrDomain, AttributeDef, AttributeSlot, Multiplicity, Ontology, RangeConstraint, RelationDef,
    SubobjectSpec, TypeDef, TypeKind, ABSTRACT_ROOT, PHYSICAL_ROOT,
};

const SENSED_ATTRIBUTES: [&str; 4] = ["humidity", "light_intensity", "temperature", "co_pollution"];

fn vocabulary() -> Vec<AttributeDef> {
    vec![
        AttributeDef::number("weight", Some("kg"), Some(RangeConstraint::Interval {
            min: Some(0.0),
            max: None,
        })),
        AttributeDef::text("color"),
        AttributeDef {
            name: "sensed_attribute".into(),
            domain: AttrDomain::Enumeration(SENSED_ATTRIBUTES.iter().map(|s| s.to_string()).collect()),
            range: None,
        },
        AttributeDef::number("sensed_value", None, None),
        AttributeDef::number("body_temperature", Some("C"), Some(RangeConstraint::interval(30.0, 45.0))),
        AttributeDef::number("heart_rate", Some("bpm"), Some(RangeConstraint::interval(20.0, 250.0))),
        AttributeDef::number("blood_pressure", Some("mmHg"), Some(RangeConstraint::interval(40.0, 250.0))),
        AttributeDef::text("ToolList"),
        AttributeDef::text("PreferredEnvironment"),
    ]
}

/// The upper ontology for human-robot collaboration systems.
pub fn builtin_ontology() -> Ontology {
    use TypeKind::*;
    let mut o = Ontology::skeleton();
    for a in vocabulary() {
        o.register_attribute(a).expect("builtin attribute");
    }
    for r in ["isIn", "isAdjacentTo"] {
        o.register_relation(RelationDef::binary(r)).expect("builtin relation");
    }

    let types = vec![
        TypeDef::new("NonlivingElement", PHYSICAL_ROOT, Intermediate)
            .with_attribute(AttributeSlot::optional("weight"))
            .with_attribute(AttributeSlot::optional("color")),
        TypeDef::new("DeviceElement", "NonlivingElement", Intermediate),
        TypeDef::new("RobotElement", "DeviceElement", PhysicalLeaf),
        TypeDef::new("ToolElement", "DeviceElement", PhysicalLeaf),
        TypeDef::new("SimpleSensor", "DeviceElement", PhysicalLeaf)
            .with_attribute(AttributeSlot::required("sensed_attribute"))
            .with_attribute(AttributeSlot::required("sensed_value")),
        TypeDef::new("LightingElement", "DeviceElement", PhysicalLeaf),
        TypeDef::new("LivingElement", PHYSICAL_ROOT, Intermediate)
            .with_attribute(AttributeSlot::optional("weight")),
        TypeDef::new("BodyElement", "LivingElement", Intermediate),
        TypeDef::new("HumanBody", "BodyElement", PhysicalLeaf)
            .with_attribute(AttributeSlot::required("body_temperature"))
            .with_attribute(AttributeSlot::required("heart_rate"))
            .with_attribute(AttributeSlot::required("blood_pressure")),
        TypeDef::new("Nonliving", ABSTRACT_ROOT, Intermediate),
        TypeDef::new("Device", "Nonliving", Intermediate),
        TypeDef::new("Robot", "Device", Intermediate).with_subobject(SubobjectSpec::new(
            "elements",
            "RobotElement",
            Multiplicity::AtLeast(1),
        )),
        TypeDef::new("MobileRobot", "Robot", AbstractLeaf),
        TypeDef::new("RobotWithArm", "Robot", AbstractLeaf),
        TypeDef::new("Platform", "Robot", AbstractLeaf),
        TypeDef::new("RobotWithContainer", "Robot", AbstractLeaf),
        TypeDef::new("Sensor", "Device", AbstractLeaf).with_subobject(SubobjectSpec::new(
            "sensors",
            "SimpleSensor",
            Multiplicity::AtLeast(1),
        )),
        TypeDef::new("Living", ABSTRACT_ROOT, Intermediate),
        TypeDef::new("Human", "Living", AbstractLeaf)
            .with_attribute(AttributeSlot::optional("ToolList"))
            .with_attribute(AttributeSlot::optional("PreferredEnvironment"))
            .with_subobject(SubobjectSpec::new("Body", "HumanBody", Multiplicity::Exactly(1))),
    ];
    for t in types {
        o.insert_type(t).expect("builtin type");
    }
    o
}
