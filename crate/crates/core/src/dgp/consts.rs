//! Frozen coefficients of the networks inside the simple designs.
//!
//! Drawn once from fixed seeds and stored verbatim so every build and
//! platform generates the same designs.

pub(crate) const SIMPLE_A_DIM: usize = 6;
pub(crate) const SIMPLE_A_HIDDEN: usize = 40;

/// Hidden weights, 40 x 6, row-major.
pub(crate) const SIMPLE_A_A1: [f64; 240] = [
    -3.559562591136578, 3.159321145322776, -2.1766543448977145, -0.647933087335994,
    -0.18835826752630241, -1.8522116302140226, -3.4194817544573586, 1.6222320054825998,
    0.9026452826372375, -4.882157657530475, 5.86852413594713, 2.421242264379809,
    -1.8984679510612665, 2.2554956855306294, -1.1673829333013757, -0.15172379684256995,
    1.972110861298002, -3.1416703328491913, 1.4396437859898217, 3.497447486809298,
    3.3057451518319643, -0.7492462882477636, 2.2572983535626494, -4.053956835455514,
    -0.3954731516921782, 1.1237098302666877, -3.3590026812159874, -0.2042189767420842,
    4.311849830790826, 6.5453985659196, 1.9434033595269202, 2.0715829889183515,
    -2.397470782545027, -3.0234707174357904, -3.530730033685296, 1.3538670747626322,
    1.879848488894217, -1.6469007989186322, -3.071687464113192, 0.6438944210321808,
    0.7822572960867511, -0.3270292255585997, 3.174957801169832, -0.2324061443332093,
    -0.16537722250415593, -2.7705361677326765, 0.33989212637630895, 3.367694410743169,
    0.15286005244002102, 0.17728650071177338, 1.084136342632173, 0.6937091496772525,
    1.3256309666003028, 1.3418024227967387, 1.5458750370020724, -1.9875436403666755,
    0.7500773657165427, -4.006753980409329, 0.6669970743584905, -3.154059454303448,
    -0.17817701547945086, 1.1851243256251134, -1.0371344026783265, 0.2442912500373659,
    -4.1010445924646834, -2.143147059711251, 1.7207044703426047, -2.8863239581126114,
    1.626130972727469, -3.4708998816993613, -2.268456143429611, -2.7385632683109433,
    0.01786423735010739, 1.3358997573892677, -2.664519616558626, -0.4536818505361173,
    4.054879496277187, -0.793479864152698, -2.039537417219816, 0.9664475433690046,
    -0.5590973148714488, -1.7542270217684008, -4.4892829401407255, 2.0458140538008807,
    -1.4275822544839754, 0.0019638126564694024, -2.659106792217937, 3.254286250173935,
    1.8696823553513655, 2.452189772986357, -0.2760467203145265, 1.169796326584246,
    2.226517874237029, 2.557523414099943, 0.7809584735409941, -0.15476171416051326,
    -0.898699118245801, -1.871609960747203, -2.41369726868726, 0.9000866434497844,
    -0.61138133065384, -4.989641527707442, -0.388119042090388, 2.65957718666808,
    -0.6879289183490934, -4.633339825376954, -0.3108548196208285, 1.9624363057739191,
    0.5049964918675774, -1.0701861069954408, 4.620722239085349, 4.749882231529973,
    -0.24606258695070232, 2.033613599481052, 0.9812359713794652, 1.9536072511543014,
    3.633178793284903, 2.050465113335288, 0.21926336140926664, -1.633764120540947,
    -2.0297171981945947, -0.06384543099915936, 2.8954613579957442, 0.751302174255587,
    0.13264161525818047, 0.6431788095313584, 0.08935715600715328, 1.3680917147362135,
    -2.807403948429823, -4.938119169681016, -1.062875124068257, -2.872684552547595,
    4.037845135464167, -0.39619215056963275, -0.6321833633123152, -3.8453850862558276,
    0.7052150821505352, -1.5590303356963922, 2.804555658097166, 2.1030525775367144,
    -1.9397402513653847, 1.0267911004263017, -6.806040260829299, -1.6832619969347116,
    3.1155538229027524, 1.9755200705047493, 0.43835222115793515, -0.0732365041133693,
    -3.548785643378856, -3.3999158100622906, 0.5585288964526276, 4.404448579489697,
    -5.427224616766475, 1.571220427704507, 1.5029913150045706, 2.3768946451315895,
    -2.173116667603023, -1.3225176772859188, 0.1142102388900145, -2.568879528170683,
    -3.0732232463549463, -2.2083961797506184, -0.1772336592367915, 0.9351333771471562,
    -0.06148434590266216, 0.19315164586121966, -1.7097830449557063, -1.8020941695306234,
    2.8015570376060275, -0.13703540067031064, -0.2060343104449755, 2.3399662519772972,
    3.096342812403897, 3.181988813668428, 1.0147305437840366, -0.12581305353687564,
    0.7232938472350137, 0.44826419194572287, 3.4937013902413634, 0.730116979351728,
    1.5960141858827301, -0.06971928287057674, 3.427629624585004, -5.132019072781398,
    0.9512726959810303, 1.888476673293645, -2.8978146265031492, 5.375775287401305,
    -0.3756755465468784, -0.402910699415163, -2.698606188188699, 2.1949154611597437,
    0.5611685346764221, -1.478983633762173, 0.5656570054641535, 1.715456267481919,
    3.0375115201490437, 0.540148603553771, -2.4120588931629126, -1.3915195116364953,
    -5.745969100461208, -1.8302053152611244, 1.8411727511103284, 1.1642917962745098,
    -0.26969012199381825, -0.8535907355143415, 3.9613344836759525, 0.7056030154451703,
    2.2738659769646437, 0.987678915341579, -1.6734412980900837, 3.888422451464572,
    -3.095347578150778, -2.990433652803249, -1.0728737645882682, -1.8241497331082945,
    -1.3936722477968253, -1.4998826606556799, 2.4670680109790766, 0.13548668782674703,
    0.8797686068315413, -3.969923772019501, -2.1173783734072664, 2.7114256560387098,
    -3.0095666131134955, 2.9463272350751497, -2.576664634966919, 0.748045820011578,
    -2.115599927839968, 0.4915507511734599, -2.2490945618446387, -0.6415135718107684,
    4.181369414380798, -0.9381741155061524, 5.091986951071213, -1.1469834943686181,
    -2.9394241487362964, 0.1876312470063865, -1.0224755375906707, 4.391329957432395,
];

/// Hidden biases.
pub(crate) const SIMPLE_A_B1: [f64; 40] = [
    0.860923068588955, 1.181273982805545, 0.6316701712585887, 2.4709971110767017,
    0.7943025166472251, 0.5313528780883513, -0.8293985972081677, -0.9093038342550448,
    0.18423593356884393, 0.9977381754488336, 1.1169590406661698, -0.9440005414502601,
    0.5314067039673245, 0.19334599692989032, -1.1182635832284737, 0.5118455817801992,
    -2.270566289057873, 0.26316354598898556, 2.471313493673772, -1.0198852016126243,
    0.01875261496877628, -1.8942642236062688, -0.7550016557819287, 0.7561977395834237,
    -1.042462005800141, -0.03425814295827893, -0.3551682991253563, -0.3784283679264714,
    0.1906486884846215, 0.48439629391143707, 1.2302677544535274, 0.8329706228846139,
    -0.5649417518483311, 1.4146960132546782, 1.248281217180286, -1.5589480991668634,
    0.6652325921965275, 0.825595171805689, 0.966318832646851, 0.5471752988886776,
];

/// Output weights, scaled so that var f(X) is close to 14 for X ~ N(0, I).
pub(crate) const SIMPLE_A_A2: [f64; 40] = [
    -0.9409850876865735, -0.1941436675328227, -1.5017411578497721, -0.11453627439206428,
    1.471808035759249, 0.49441590589308093, 0.6065874597165157, -0.3724875333185441,
    -0.736821870014811, -0.7763813983825699, 0.08988703920208418, -0.5825128884584688,
    -0.4625450739213087, 0.8302245018647372, -1.1903208077280512, -0.9531866529671132,
    -0.3702129946796985, -0.07243972781351662, -0.09394503986007144, -1.0131788373236075,
    0.14059055032554454, -0.09378977703411374, 0.25714141608139207, -0.7855227788096952,
    0.17768049708244646, 0.16018482271065723, -0.4790819741209073, -0.15852680459343668,
    -0.40332526142764535, 0.9839275141874746, -2.26298417204781, -1.0501503649684754,
    -1.2373877019180826, -0.2742906251647453, -0.4921838527234428, -0.2983204472302453,
    0.5215763985771901, -1.1842401338576183, -0.6134716019745539, -0.16183821807088092,
];

pub(crate) const SIMPLE_A_B2: f64 = 0.0;

/// Largest supported `p` in the simple(b) design.
pub const SIMPLE_B_MAX_P: usize = 20;

/// First-stage weights, 4 x 22, row-major over `(W_1..W_20, Z_1, Z_2)`.
pub(crate) const SIMPLE_B_A1: [f64; 88] = [
    0.8248376841809056, 0.407490676854494, 1.3651144380878792, 0.5870129377806728,
    -1.3589061966962865, 0.9454560140229028, 0.8497786457632583, 0.05745586070678325,
    0.6797539056059202, -0.8599381028259397, 1.162603616742565, 0.5156474425569892,
    -0.12224048695764918, 1.7987051854442277, 0.13211914112845857, 0.2940313534221837,
    -0.3043579848883498, 0.2634349515293381, 2.2868159472793255, 0.33399558828872933,
    0.6263216338250659, 0.6242876165808864, 0.5713133870665242, -1.8733389257528408,
    -1.269684619459553, -1.4120278863285962, 1.105394984146729, 0.4724764610348518,
    0.6441565967297208, -0.6368154655721654, 0.03337599981071895, -0.6038997865606979,
    -0.37767518621016755, -1.5699078987141493, 0.9733843289381483, -0.4252108533448048,
    -0.9505644941144913, 0.30826425609936536, -1.7946389739479573, -0.2841289874638946,
    -0.9332372109181213, -1.3061797135841229, 1.802353012917594, -1.4582955116489726,
    1.2647694373943057, -0.23925102073938403, -0.7428587354653353, 0.5306287388343595,
    0.01895605001453522, -0.05283647094268488, 0.30460610151082895, -0.07265156448203082,
    0.2807532339813405, 0.6780744539939223, -1.506728396296285, 0.871328035085448,
    -0.09587294682640794, -0.13343040451760985, -1.0306747352340053, -0.7300580817448217,
    -1.3401775198323453, 0.7506959976591304, -0.8053971241921324, 0.1677524258331654,
    -1.9223836517559707, 0.1758438122939282, -0.010559140569585443, -1.1518684886020985,
    0.25387900449976564, 1.0377731103933017, -0.24740476684740004, 0.5063835753272702,
    -1.1184330698260567, 0.15057213724879803, -1.1708387056287295, -0.5590927321612996,
    -0.5860705665786862, -0.8358401469219242, -0.6061571090021192, -0.7369974036657917,
    0.9841661247229748, -1.614668381018615, 0.23857538683713012, 0.6275305413646971,
    -0.12971489991766022, -0.69185503039909, -0.3769808611284411, -0.6733045742518733,
];

/// First-stage output weights.
pub(crate) const SIMPLE_B_A2: [f64; 4] = [
    1.3915992784535487, -1.3798820493641468, 1.7731191111691758, -0.3359224370192628,
];

/// Second-stage coefficients on `W`.
pub(crate) const SIMPLE_B_A3: [f64; 20] = [
    0.5300949691240099, 0.15893767041220744, -0.9874610567744788, 1.0423440590151094,
    -0.7690394198274326, -0.19220104642195707, -1.0909371733126598, -0.1274693666740216,
    -0.3168891423695198, -2.9885926260159152, 0.29168390364358526, -0.6991126917741971,
    -2.688379009895851, -0.5548099467289739, 0.7128850685918466, 1.1430017222430897,
    -1.86367872115689, -0.17388814680502748, -0.3617531632427606, -1.441888029297126,
];
